//! Grid dynamics in one dimension: GRW hits, the GRW-type master equation and
//! Bohmian trajectories. Units have ħ = 1.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rustfft::{Fft, FftPlanner};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::C64;

pub const MIN_GRID: usize = 16;
pub const NORM_TOL: f64 = 1e-8;
/// The hit kernel is cut off this many widths from its center.
pub const KERNEL_CUTOFF: f64 = 10.0;
pub const NODE_FLOOR: f64 = 1e-12;
pub const MAX_HALVINGS: u32 = 20;
pub const TRACE_DRIFT_LIMIT: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("hit weights vanished")]
    NumericalUnderflow,
    #[error("step rejected: trace drift {0:e}")]
    StepRejected(f64),
    #[error("|ψ|² = {density:e} at q = {q} is below the node floor")]
    NodeProximity { q: f64, density: f64 },
    #[error("q = {0} is outside the grid")]
    OutsideGrid(f64),
}

/// Periodic FFT helpers for a grid of `len` points spaced `dx`.
struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl Spectral {
    fn new(len: usize, dx: f64) -> Self {
        let mut planner = FftPlanner::new();
        let dk = std::f64::consts::TAU / (len as f64 * dx);
        let k = (0..len)
            .map(|j| if j < len.div_ceil(2) { j as f64 } else { j as f64 - len as f64 } * dk)
            .collect();
        Self { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len), k }
    }

    /// Multiplies the Fourier coefficients of `data` by `phase(k)` in place.
    fn apply(&self, data: &mut [C64], phase: &[C64]) {
        self.forward.process(data);
        let scale = 1.0 / data.len() as f64;
        for (d, p) in data.iter_mut().zip(phase) {
            *d *= p * scale;
        }
        self.inverse.process(data);
    }

    fn free_phases(&self, mass: f64, t: f64) -> Vec<C64> {
        self.k.iter().map(|k| C64::from_polar(1.0, -k * k * t / (2.0 * mass))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    x_min: f64,
    dx: f64,
    values: Vec<C64>,
    mass: f64,
}

fn check_grid(x_min: f64, dx: f64, len: usize, mass: f64) -> Result<(), DynamicsError> {
    if len < MIN_GRID {
        return Err(DynamicsError::InvalidGrid(format!("{len} points, need at least {MIN_GRID}")));
    }
    if !(dx > 0.0 && dx.is_finite() && x_min.is_finite()) {
        return Err(DynamicsError::InvalidGrid("dx must be positive and finite".into()));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(DynamicsError::InvalidParams("mass must be positive".into()));
    }
    Ok(())
}

impl GridWavefunction {
    pub fn new(x_min: f64, dx: f64, values: Vec<C64>, mass: f64) -> Result<Self, DynamicsError> {
        check_grid(x_min, dx, values.len(), mass)?;
        let s = Self { x_min, dx, values, mass };
        let n = s.norm_sq();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(DynamicsError::InvalidGrid(format!("Σ|ψ|²dx = {n}")));
        }
        Ok(s)
    }

    pub fn normalized(x_min: f64, dx: f64, mut values: Vec<C64>, mass: f64) -> Result<Self, DynamicsError> {
        check_grid(x_min, dx, values.len(), mass)?;
        let n: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx;
        if !(n > 0.0 && n.is_finite()) {
            return Err(DynamicsError::NumericalUnderflow);
        }
        let s = n.sqrt().recip();
        values.iter_mut().for_each(|v| *v *= s);
        Ok(Self { x_min, dx, values, mass })
    }

    /// `exp(−(x−x0)²/4σ²) e^{ikx}`, normalized, so `|ψ|²` has standard deviation `σ`.
    pub fn gaussian(x_min: f64, dx: f64, len: usize, mass: f64, x0: f64, sigma: f64, k: f64) -> Result<Self, DynamicsError> {
        let values = (0..len)
            .map(|i| {
                let x = x_min + i as f64 * dx;
                C64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), k * x)
            })
            .collect();
        Self::normalized(x_min, dx, values, mass)
    }

    /// Normalized `Σ_j w_j^{1/2} φ_j` of Gaussian packets of width `sigma`;
    /// for well separated packets the branch weights are the `w_j`.
    pub fn packets(x_min: f64, dx: f64, len: usize, mass: f64, packets: &[(f64, f64)], sigma: f64) -> Result<Self, DynamicsError> {
        let mut values = vec![C64::new(0.0, 0.0); len];
        for &(center, weight) in packets {
            let g = Self::gaussian(x_min, dx, len, mass, center, sigma, 0.0)?;
            for (v, p) in values.iter_mut().zip(&g.values) {
                *v += p * weight.sqrt();
            }
        }
        Self::normalized(x_min, dx, values, mass)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `|⟨φ|ψ⟩|` with the grid inner product.
    pub fn fidelity(&self, other: &GridWavefunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm()
            * self.dx
    }

    /// Free evolution for time `t` with periodic boundaries.
    pub fn free_evolve(&self, t: f64) -> Self {
        let sp = Spectral::new(self.len(), self.dx);
        self.free_evolve_with(&sp, t)
    }

    fn free_evolve_with(&self, sp: &Spectral, t: f64) -> Self {
        let mut v = self.values.clone();
        sp.apply(&mut v, &sp.free_phases(self.mass, t));
        Self { values: v, ..self.clone() }
    }
}

/// Hit rate `ν` per particle, localization width `Δ` and particle count `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GRWParams {
    nu: f64,
    delta: f64,
    n_particles: u64,
}

impl GRWParams {
    pub fn new(nu: f64, delta: f64, n_particles: u64) -> Result<Self, DynamicsError> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(DynamicsError::InvalidParams("ν must be non-negative and finite".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(DynamicsError::InvalidParams("Δ must be positive".into()));
        }
        if n_particles == 0 {
            return Err(DynamicsError::InvalidParams("N must be at least 1".into()));
        }
        Ok(Self { nu, delta, n_particles })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_particles(&self) -> u64 {
        self.n_particles
    }

    /// Total hit rate `N ν`.
    pub fn rate(&self) -> f64 {
        self.n_particles as f64 * self.nu
    }
}

/// Exact decimal `mantissa × 10^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sci {
    pub mantissa: u64,
    pub exponent: i32,
}

impl Sci {
    pub fn new(mut mantissa: u64, mut exponent: i32) -> Self {
        while mantissa != 0 && mantissa.is_multiple_of(10) {
            mantissa /= 10;
            exponent += 1;
        }
        Self { mantissa, exponent }
    }

    pub fn checked_mul(self, other: Sci) -> Option<Sci> {
        Some(Sci::new(self.mantissa.checked_mul(other.mantissa)?, self.exponent + other.exponent))
    }

    /// `1/self` when it is a terminating decimal.
    pub fn recip(self) -> Option<Sci> {
        if self.mantissa == 0 {
            return None;
        }
        let mut m = self.mantissa;
        let (mut twos, mut fives) = (0u32, 0u32);
        while m.is_multiple_of(2) {
            m /= 2;
            twos += 1;
        }
        while m.is_multiple_of(5) {
            m /= 5;
            fives += 1;
        }
        if m != 1 {
            return None;
        }
        // 1/(2^a 5^b) = 5^a 2^b / 10^(a+b)
        let mantissa = 5u64.checked_pow(twos)?.checked_mul(2u64.checked_pow(fives)?)?;
        Some(Sci::new(mantissa, -self.exponent - (twos + fives) as i32))
    }

    pub fn to_f64(self) -> f64 {
        format!("{self}").parse().expect("valid float literal")
    }
}

impl fmt::Display for Sci {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", self.mantissa, self.exponent)
    }
}

/// Physical GRW parameters in seconds and centimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct GrwPreset {
    pub name: &'static str,
    pub nu_per_second: Sci,
    pub delta_cm: Sci,
    pub n_particles: Sci,
}

pub const PRESET_MICROSCOPIC: GrwPreset = GrwPreset {
    name: "paper-microscopic",
    nu_per_second: Sci { mantissa: 1, exponent: -16 },
    delta_cm: Sci { mantissa: 1, exponent: -5 },
    n_particles: Sci { mantissa: 1, exponent: 0 },
};

pub const PRESET_MACROSCOPIC: GrwPreset = GrwPreset {
    name: "paper-macroscopic",
    nu_per_second: Sci { mantissa: 1, exponent: -16 },
    delta_cm: Sci { mantissa: 1, exponent: -5 },
    n_particles: Sci { mantissa: 1, exponent: 23 },
};

pub fn presets() -> [GrwPreset; 2] {
    [PRESET_MICROSCOPIC, PRESET_MACROSCOPIC]
}

pub fn preset(name: &str) -> Option<GrwPreset> {
    presets().into_iter().find(|p| p.name == name)
}

/// Desk-scale parameters derived from a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskGrw {
    pub params: GRWParams,
    /// Desk rate per time unit divided by the physical rate per second.
    pub rescale_factor: f64,
}

impl GrwPreset {
    /// `N ν` in s⁻¹.
    pub fn rate_per_second(&self) -> Sci {
        self.n_particles.checked_mul(self.nu_per_second).expect("preset mantissas are small")
    }

    /// `1 / (N ν)` in seconds.
    pub fn mean_inter_hit_seconds(&self) -> Option<Sci> {
        self.rate_per_second().recip()
    }

    /// Keeps `N ν` semantics while rescaling the total rate to `desk_rate`
    /// per time unit, with `desk_particles` particles and width `delta`.
    pub fn desk(&self, desk_rate: f64, desk_particles: u64, delta: f64) -> Result<DeskGrw, DynamicsError> {
        if desk_particles == 0 {
            return Err(DynamicsError::InvalidParams("N must be at least 1".into()));
        }
        let params = GRWParams::new(desk_rate / desk_particles as f64, delta, desk_particles)?;
        Ok(DeskGrw { params, rescale_factor: desk_rate / self.rate_per_second().to_f64() })
    }
}

/// One spontaneous localization.
#[derive(Debug, Clone, PartialEq)]
pub struct HitEvent {
    pub time: f64,
    pub center: f64,
    pub particle: u64,
}

/// `Σ_x |ψ(x)|² e^{−(X−x)²/Δ²}` for each candidate center `X` on the grid.
pub fn hit_weights(psi: &GridWavefunction, delta: f64) -> Vec<f64> {
    let dens = psi.density();
    let n = dens.len();
    let reach = ((KERNEL_CUTOFF * delta / psi.dx).ceil() as usize).min(n);
    let kernel: Vec<f64> = (0..=reach)
        .map(|j| {
            let d = j as f64 * psi.dx;
            (-(d * d) / (delta * delta)).exp()
        })
        .collect();
    (0..n)
        .map(|c| {
            let lo = c.saturating_sub(reach);
            let hi = (c + reach).min(n - 1);
            (lo..=hi).map(|x| dens[x] * kernel[c.abs_diff(x)]).sum::<f64>() * psi.dx
        })
        .collect()
}

/// Multiplies `ψ` by `exp(−(X−x)²/2Δ²)` with `X` drawn from `‖ψ G_X‖²`, then
/// renormalizes. The event time is left at zero.
pub fn grw_hit<R: Rng + ?Sized>(
    psi: &GridWavefunction,
    params: &GRWParams,
    rng: &mut R,
) -> Result<(GridWavefunction, HitEvent), DynamicsError> {
    let w = hit_weights(psi, params.delta);
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for x in &w {
        acc += x;
        cdf.push(acc);
    }
    if !(acc > 0.0 && acc.is_finite()) {
        return Err(DynamicsError::NumericalUnderflow);
    }
    let u = rng.random::<f64>() * acc;
    let c = cdf.partition_point(|&v| v <= u).min(w.len() - 1);
    let center = psi.x(c);
    let particle = rng.random_range(0..params.n_particles);
    let values: Vec<C64> = psi
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = psi.x(i) - center;
            v * (-(d * d) / (2.0 * params.delta * params.delta)).exp()
        })
        .collect();
    let out = GridWavefunction::normalized(psi.x_min, psi.dx, values, psi.mass)
        .map_err(|_| DynamicsError::NumericalUnderflow)?;
    Ok((out, HitEvent { time: 0.0, center, particle }))
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GrwRun {
    pub events: Vec<HitEvent>,
    /// Initial state, after every hit, and at `t_end`.
    pub snapshots: Vec<Snapshot>,
    pub final_state: GridWavefunction,
}

/// Hits at exponential intervals with rate `N ν`, free evolution in between.
pub fn grw_run<R: Rng + ?Sized>(
    psi0: &GridWavefunction,
    params: &GRWParams,
    t_end: f64,
    rng: &mut R,
) -> Result<GrwRun, DynamicsError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidParams("t_end must be positive".into()));
    }
    let sp = Spectral::new(psi0.len(), psi0.dx);
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut snapshots = vec![Snapshot { time: 0.0, density: psi.density() }];
    let arrivals = (params.rate() > 0.0).then(|| Exp::new(params.rate()).expect("positive rate"));
    while let Some(exp) = &arrivals {
        let next = t + exp.sample(rng);
        if next > t_end {
            break;
        }
        psi = psi.free_evolve_with(&sp, next - t);
        t = next;
        let (hit, mut ev) = grw_hit(&psi, params, rng)?;
        ev.time = t;
        psi = hit;
        events.push(ev);
        snapshots.push(Snapshot { time: t, density: psi.density() });
    }
    psi = psi.free_evolve_with(&sp, t_end - t);
    snapshots.push(Snapshot { time: t_end, density: psi.density() });
    Ok(GrwRun { events, snapshots, final_state: psi })
}

/// `ρ(x, x′)` on a grid, normalized so `Σ ρ(x, x) dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    x_min: f64,
    dx: f64,
    mass: f64,
    values: CMatrix,
}

impl DensityGrid {
    pub fn from_wavefunction(psi: &GridWavefunction) -> Self {
        let n = psi.len();
        let values = CMatrix::from_fn(n, n, |i, j| psi.values[i] * psi.values[j].conj());
        Self { x_min: psi.x_min, dx: psi.dx, mass: psi.mass, values }
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn trace(&self) -> f64 {
        self.values.diagonal().iter().map(|z| z.re).sum::<f64>() * self.dx
    }

    pub fn purity(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx * self.dx
    }

    /// Frobenius norm of the block with `x` in `rows` and `x′` in `cols`.
    pub fn patch_norm(&self, rows: (f64, f64), cols: (f64, f64)) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in (0..n).filter(|&i| (rows.0..=rows.1).contains(&self.x(i))) {
            for j in (0..n).filter(|&j| (cols.0..=cols.1).contains(&self.x(j))) {
                acc += self.values[(i, j)].norm_sqr();
            }
        }
        acc.sqrt() * self.dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterParams {
    pub lambda: f64,
    pub kinetic: bool,
}

/// One Strang step of `i∂ρ/∂t = [H, ρ] − iΛ(x−x′)²ρ` with `H = p²/2m`:
/// half localization step, exact free step, half localization step.
pub fn master_step(rho: &DensityGrid, params: &MasterParams, dt: f64) -> Result<DensityGrid, DynamicsError> {
    if !(params.lambda >= 0.0 && params.lambda.is_finite() && dt.is_finite() && dt >= 0.0) {
        return Err(DynamicsError::InvalidParams("Λ and dt must be non-negative".into()));
    }
    let n = rho.len();
    let before = rho.trace();
    let mut m = rho.values.clone();
    let damp = |m: &mut CMatrix, tau: f64| {
        for j in 0..n {
            for i in 0..n {
                let d = rho.x(i) - rho.x(j);
                m[(i, j)] *= (-params.lambda * d * d * tau).exp();
            }
        }
    };
    if params.kinetic {
        damp(&mut m, 0.5 * dt);
        let sp = Spectral::new(n, rho.dx);
        let phases = sp.free_phases(rho.mass, dt);
        // U ρ: evolve every column
        for j in 0..n {
            let mut col: Vec<C64> = m.column(j).iter().copied().collect();
            sp.apply(&mut col, &phases);
            m.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        // (U ρ) U† = (U (U ρ)†)†: evolve every row conjugated
        let conj_phases: Vec<C64> = phases.iter().map(|p| p.conj()).collect();
        for i in 0..n {
            let mut row: Vec<C64> = m.row(i).iter().copied().collect();
            sp.apply(&mut row, &conj_phases);
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        damp(&mut m, 0.5 * dt);
        m = (&m + m.adjoint()).scale(0.5);
    } else {
        damp(&mut m, dt);
    }
    let out = DensityGrid { values: m, ..rho.clone() };
    let drift = (out.trace() - before).abs();
    if !drift.is_finite() || drift > TRACE_DRIFT_LIMIT {
        return Err(DynamicsError::StepRejected(drift));
    }
    Ok(out)
}

/// `ψ` and `∂ψ` (centered differences) on the grid, ready for interpolation.
#[derive(Debug, Clone)]
pub struct GuidingField {
    x_min: f64,
    dx: f64,
    mass: f64,
    psi: Vec<C64>,
    grad: Vec<C64>,
}

impl GuidingField {
    pub fn new(psi: &GridWavefunction) -> Self {
        let n = psi.len();
        let mut grad = vec![C64::new(0.0, 0.0); n];
        for i in 1..n - 1 {
            grad[i] = (psi.values[i + 1] - psi.values[i - 1]) / (2.0 * psi.dx);
        }
        Self { x_min: psi.x_min, dx: psi.dx, mass: psi.mass, psi: psi.values.clone(), grad }
    }

    /// Interior interval where centered differences exist.
    pub fn support(&self) -> (f64, f64) {
        (self.x_min + self.dx, self.x_min + (self.psi.len() - 2) as f64 * self.dx)
    }

    /// `v = (1/m) Im(ψ* ∂ψ) / |ψ|²` at `q`, linearly interpolated.
    pub fn velocity(&self, q: f64) -> Result<f64, DynamicsError> {
        let (lo, hi) = self.support();
        if !(q >= lo && q <= hi) {
            return Err(DynamicsError::OutsideGrid(q));
        }
        let s = (q - self.x_min) / self.dx;
        let i = (s.floor() as usize).min(self.psi.len() - 3);
        let f = s - i as f64;
        let lerp = |v: &[C64]| v[i] * (1.0 - f) + v[i + 1] * f;
        let p = lerp(&self.psi);
        let g = lerp(&self.grad);
        let density = p.norm_sqr();
        if density < NODE_FLOOR {
            return Err(DynamicsError::NodeProximity { q, density });
        }
        Ok((p.conj() * g).im / (density * self.mass))
    }
}

pub fn bohm_velocity(psi: &GridWavefunction, q: f64) -> Result<f64, DynamicsError> {
    GuidingField::new(psi).velocity(q)
}

/// Time-dependent wavefunction driving the trajectories.
pub trait WavefunctionSource {
    fn at(&self, t: f64) -> GridWavefunction;
}

/// `ψ(t) = ψ` for all `t`.
pub struct Stationary(pub GridWavefunction);

impl WavefunctionSource for Stationary {
    fn at(&self, _t: f64) -> GridWavefunction {
        self.0.clone()
    }
}

/// Free spectral evolution of an initial state.
pub struct FreeEvolution {
    psi0: GridWavefunction,
    spectral: Spectral,
}

impl FreeEvolution {
    pub fn new(psi0: GridWavefunction) -> Self {
        let spectral = Spectral::new(psi0.len(), psi0.dx);
        Self { psi0, spectral }
    }
}

impl WavefunctionSource for FreeEvolution {
    fn at(&self, t: f64) -> GridWavefunction {
        self.psi0.free_evolve_with(&self.spectral, t)
    }
}

#[derive(Debug, Clone)]
pub struct BohmEnsemble {
    pub positions: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl BohmEnsemble {
    /// `n` positions from `|ψ|²`, uniform within each grid cell.
    pub fn sample(psi: &GridWavefunction, n: usize, seed: u64, stream: u64) -> Self {
        let mut rng = crate::random::stream(seed, stream);
        let dens = psi.density();
        let mut cdf = Vec::with_capacity(dens.len());
        let mut acc = 0.0;
        for d in &dens {
            acc += d;
            cdf.push(acc);
        }
        let positions = (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let c = cdf.partition_point(|&v| v <= u).min(dens.len() - 1);
                psi.x(c) + (rng.random::<f64>() - 0.5) * psi.dx
            })
            .collect();
        Self { positions, seed, stream }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Active,
    Escaped,
    /// Step halving hit the limit next to a node.
    Stuck,
}

#[derive(Debug, Clone)]
pub struct BohmRun {
    pub times: Vec<f64>,
    /// `paths[j][s]` is trajectory `j` at `times[s]`; frozen once it stops.
    pub paths: Vec<Vec<f64>>,
    pub status: Vec<TrajectoryStatus>,
}

impl BohmRun {
    pub fn escaped(&self) -> usize {
        self.status.iter().filter(|s| **s != TrajectoryStatus::Active).count()
    }

    /// Final positions of trajectories that stayed on the grid.
    pub fn final_positions(&self) -> Vec<f64> {
        self.paths
            .iter()
            .zip(&self.status)
            .filter(|(_, s)| **s == TrajectoryStatus::Active)
            .map(|(p, _)| *p.last().expect("non-empty path"))
            .collect()
    }

    /// Pairs of trajectories, adjacent in initial order, whose order flips
    /// at some recorded time.
    pub fn crossings(&self) -> usize {
        let mut order: Vec<usize> = (0..self.paths.len()).filter(|&j| self.status[j] == TrajectoryStatus::Active).collect();
        order.sort_by(|&a, &b| self.paths[a][0].total_cmp(&self.paths[b][0]));
        order
            .windows(2)
            .filter(|w| {
                let (a, b) = (&self.paths[w[0]], &self.paths[w[1]]);
                a[0] < b[0] && a.iter().zip(b).any(|(x, y)| x > y)
            })
            .count()
    }
}

enum Advance {
    Done(f64),
    Escaped,
    Stuck,
}

/// Midpoint step from `t` over `h`, halving on node proximity.
fn advance(source: &dyn WavefunctionSource, q: f64, t: f64, h: f64, fields: Option<(&GuidingField, &GuidingField)>, depth: u32) -> Advance {
    let owned;
    let (f0, fm) = match fields {
        Some(f) => f,
        None => {
            owned = (GuidingField::new(&source.at(t)), GuidingField::new(&source.at(t + 0.5 * h)));
            (&owned.0, &owned.1)
        }
    };
    let step = f0
        .velocity(q)
        .and_then(|v0| fm.velocity(q + 0.5 * h * v0))
        .map(|vm| q + h * vm);
    match step {
        Ok(next) => {
            let (lo, hi) = f0.support();
            if next >= lo && next <= hi {
                Advance::Done(next)
            } else {
                Advance::Escaped
            }
        }
        Err(DynamicsError::OutsideGrid(_)) => Advance::Escaped,
        Err(_) if depth >= MAX_HALVINGS => Advance::Stuck,
        Err(_) => match advance(source, q, t, 0.5 * h, None, depth + 1) {
            Advance::Done(mid) => advance(source, mid, t + 0.5 * h, 0.5 * h, None, depth + 1),
            other => other,
        },
    }
}

/// Integrates every ensemble member over `steps` steps of size `dt`.
pub fn bohm_run(source: &dyn WavefunctionSource, ensemble: &BohmEnsemble, dt: f64, steps: usize) -> Result<BohmRun, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidParams("dt must be positive".into()));
    }
    let n = ensemble.positions.len();
    let mut paths: Vec<Vec<f64>> = ensemble.positions.iter().map(|&q| vec![q]).collect();
    let mut status = vec![TrajectoryStatus::Active; n];
    let mut times = vec![0.0];
    let mut next_field = GuidingField::new(&source.at(0.0));
    for s in 0..steps {
        let t = s as f64 * dt;
        let f0 = next_field;
        let fm = GuidingField::new(&source.at(t + 0.5 * dt));
        next_field = GuidingField::new(&source.at(t + dt));
        for j in 0..n {
            let q = *paths[j].last().expect("non-empty");
            if status[j] == TrajectoryStatus::Active {
                match advance(source, q, t, dt, Some((&f0, &fm)), 0) {
                    Advance::Done(next) => {
                        paths[j].push(next);
                        continue;
                    }
                    Advance::Escaped => status[j] = TrajectoryStatus::Escaped,
                    Advance::Stuck => status[j] = TrajectoryStatus::Stuck,
                }
            }
            paths[j].push(q);
        }
        times.push(t + dt);
    }
    Ok(BohmRun { times, paths, status })
}

#[derive(Debug, Clone)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson χ² of `positions` against `|ψ|²`, with grid cells merged into
/// bins expecting at least `min_expected` counts.
pub fn equivariance_chi2(positions: &[f64], psi: &GridWavefunction, min_expected: f64) -> ChiSquareTest {
    let n = positions.len() as f64;
    let dens = psi.density();
    let total: f64 = dens.iter().sum();
    // bin edges as cell index ranges
    let mut bins: Vec<(usize, usize, f64)> = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, d) in dens.iter().enumerate() {
        acc += d / total * n;
        if acc >= min_expected {
            bins.push((start, i, acc));
            start = i + 1;
            acc = 0.0;
        }
    }
    if acc > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.1 = dens.len() - 1;
            last.2 += acc;
        } else {
            bins.push((0, dens.len() - 1, acc));
        }
    }
    let cell = |q: f64| (((q - psi.x_min) / psi.dx).round().max(0.0) as usize).min(dens.len() - 1);
    let mut observed = vec![0.0; bins.len()];
    for &q in positions {
        let c = cell(q);
        let b = bins.partition_point(|&(_, hi, _)| hi < c);
        observed[b.min(bins.len() - 1)] += 1.0;
    }
    let statistic: f64 = bins.iter().zip(&observed).map(|(&(_, _, e), &o)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).map(|c| 1.0 - c.cdf(statistic)).unwrap_or(0.0);
    ChiSquareTest { statistic, dof, p_value, bins: bins.len() }
}
