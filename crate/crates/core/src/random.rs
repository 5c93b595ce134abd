//! Random states, operators and the counter-based stream used by every
//! stochastic engine.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{DensityOperator, Observable, PureState, SpaceLayout};
use crate::linalg::{CMatrix, CVector};
use crate::C64;

/// Independent, reproducible stream `stream` of the generator keyed by `seed`.
///
/// ChaCha is counter based, so stream `k` is the same no matter how many
/// other streams were drawn or in which order.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| complex_normal(rng))
}

/// Haar-random pure state.
pub fn haar_state<R: Rng + ?Sized>(layout: SpaceLayout, rng: &mut R) -> PureState {
    let v = gaussian_vector(layout.dim(), rng);
    PureState::normalized(layout, v).expect("gaussian vector is almost surely nonzero")
}

/// `rows × cols` isometry (orthonormal columns) from the QR of a Gaussian matrix.
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng));
    let q = g.qr().q();
    q.columns(0, cols).into_owned()
}

pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    haar_isometry(dim, dim, rng)
}

/// GUE-like Hermitian operator with O(1) entries.
pub fn random_hermitian<R: Rng + ?Sized>(layout: SpaceLayout, rng: &mut R) -> Observable {
    let d = layout.dim();
    let g = CMatrix::from_fn(d, d, |_, _| complex_normal(rng));
    let h = (&g + g.adjoint()).scale(0.5);
    Observable::from_parts_unchecked(layout, h)
}

/// Full-rank density operator `G G† / Tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(layout: SpaceLayout, rng: &mut R) -> DensityOperator {
    let d = layout.dim();
    let g = CMatrix::from_fn(d, d, |_, _| complex_normal(rng));
    let m = &g * g.adjoint();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    let m = m.unscale(tr);
    let m = (&m + m.adjoint()).scale(0.5);
    DensityOperator::from_parts_unchecked(layout, m)
}

/// Uniform phase on the unit circle.
pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_order_independent() {
        let a = stream(7, 3).next_u64();
        let mut other = stream(7, 2);
        other.next_u64();
        let b = stream(7, 3).next_u64();
        assert_eq!(a, b);
        assert_ne!(stream(7, 3).next_u64(), stream(7, 4).next_u64());
    }

    #[test]
    fn isometry_is_orthonormal() {
        let mut rng = stream(1, 0);
        let q = haar_isometry(4, 2, &mut rng);
        let gram = q.adjoint() * &q;
        assert!(crate::linalg::max_abs_diff(&gram, &CMatrix::identity(2, 2)) < 1e-12);
    }
}
