//! Numerical decoherence laboratory.
//!
//! Dense linear algebra over labeled tensor-product spaces ([`hilbert`]) is the
//! substrate for the physics engines:
//!
//! * [`measurement`]: von Neumann premeasurement and the system-apparatus-environment chain.
//! * [`spinbath`]: the exactly solvable spin-environment dephasing model.
//! * [`einselection`]: commutativity criterion, predictability sieve, pointer regimes.
//! * [`envariance`]: envariant transforms and the swap/counting derivation of equal probabilities.
//! * [`histories`]: decoherence functionals, consistency and coarse-graining.
//! * [`dynamics`]: GRW hits, the GRW/decoherence master equation and Bohmian trajectories.
//!
//! Conventions: ħ = 1, time evolution is `exp(-iHt)`, amplitudes are stored
//! row-major over the factor order of a [`hilbert::SpaceLayout`].

pub mod dynamics;
pub mod einselection;
pub mod envariance;
pub mod hilbert;
pub mod histories;
pub mod linalg;
pub mod measurement;
pub mod random;
pub mod spinbath;

pub use num_complex::Complex64 as C64;
