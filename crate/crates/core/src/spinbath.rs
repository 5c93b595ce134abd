//! Exactly solvable dephasing of one spin by `N` environment spins.
//!
//! The coupling is `H_SE = σ_z ⊗ Σ_k (g_k/2) σ_z^(k)` (no self-Hamiltonians)
//! and states evolve by `exp(-iHt)`. With the product initial state
//! `(a|↑⟩ + b|↓⟩) ⊗_k (α_k|↑_k⟩ + β_k|↓_k⟩)` the environment branches are
//!
//! ```text
//! |E_↑(t)⟩ = |E_↓(-t)⟩ = ⊗_k (α_k e^{-i g_k t/2}|↑_k⟩ + β_k e^{i g_k t/2}|↓_k⟩)
//! ```
//!
//! and the interference coefficient is
//! `z(t) = ⟨E_↑|E_↓⟩ = Π_k (|α_k|² e^{i g_k t} + |β_k|² e^{-i g_k t})`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::hilbert::{DensityOperator, HilbertError, Observable, PureState, SpaceLayout};
use crate::linalg::{CMatrix, CVector};
use crate::random;
use crate::C64;

/// Largest environment accepted by the brute-force state construction.
pub const MAX_BRUTE_FORCE_ENV: usize = 14;
/// Largest environment for which a dense Hamiltonian is built.
pub const MAX_DENSE_ENV: usize = 9;

const PARAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpinBathError {
    #[error("invalid spin-bath parameters: {0}")]
    InvalidParams(String),
    #[error("parameters are not homogeneous (α_k and g_k must not depend on k)")]
    NotHomogeneous,
    #[error("environment of {n} spins exceeds the limit of {max}")]
    SizeGuard { n: usize, max: usize },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// System amplitudes `(a, b)`, couplings `g_k` and environment amplitudes `(α_k, β_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinBathParams {
    a: C64,
    b: C64,
    couplings: Vec<f64>,
    env_amps: Vec<(C64, C64)>,
}

impl SpinBathParams {
    pub fn new(
        a: C64,
        b: C64,
        couplings: Vec<f64>,
        env_amps: Vec<(C64, C64)>,
    ) -> Result<Self, SpinBathError> {
        let bad = |m: String| SpinBathError::InvalidParams(m);
        if couplings.is_empty() {
            return Err(bad("environment needs at least one spin".into()));
        }
        if couplings.len() != env_amps.len() {
            return Err(bad(format!(
                "{} couplings but {} environment spins",
                couplings.len(),
                env_amps.len()
            )));
        }
        if ((a.norm_sqr() + b.norm_sqr()) - 1.0).abs() > PARAM_TOL {
            return Err(bad("|a|² + |b|² must equal 1".into()));
        }
        if couplings.iter().any(|g| !g.is_finite()) {
            return Err(bad("couplings must be finite".into()));
        }
        for (k, (al, be)) in env_amps.iter().enumerate() {
            if ((al.norm_sqr() + be.norm_sqr()) - 1.0).abs() > PARAM_TOL {
                return Err(bad(format!("|α_{k}|² + |β_{k}|² must equal 1")));
            }
        }
        Ok(Self { a, b, couplings, env_amps })
    }

    /// Every environment spin in `α|↑⟩ + β|↓⟩` with coupling `g`.
    pub fn homogeneous(n: usize, a: C64, b: C64, alpha: C64, beta: C64, g: f64) -> Result<Self, SpinBathError> {
        Self::new(a, b, vec![g; n], vec![(alpha, beta); n])
    }

    /// Random environment: `|α_k|²` uniform in (0,1) with uniform phases,
    /// `g_k` uniform in (0,1]. The system amplitudes are drawn the same way.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, SpinBathError> {
        let amp = |rng: &mut R| {
            let p: f64 = rng.random_range(f64::EPSILON..1.0);
            (random::unit_phase(rng) * p.sqrt(), random::unit_phase(rng) * (1.0 - p).sqrt())
        };
        let (a, b) = amp(rng);
        let env_amps = (0..n).map(|_| amp(rng)).collect();
        let couplings = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        Self::new(a, b, couplings, env_amps)
    }

    /// Same environment with a different system state.
    pub fn with_system(&self, a: C64, b: C64) -> Result<Self, SpinBathError> {
        Self::new(a, b, self.couplings.clone(), self.env_amps.clone())
    }

    pub fn n_env(&self) -> usize {
        self.couplings.len()
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn b(&self) -> C64 {
        self.b
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn env_amps(&self) -> &[(C64, C64)] {
        &self.env_amps
    }

    fn homogeneous_parts(&self) -> Result<(f64, f64), SpinBathError> {
        let g = self.couplings[0];
        let p = self.env_amps[0].0.norm_sqr();
        let same = self.couplings.iter().all(|&x| x == g)
            && self.env_amps.iter().all(|(al, _)| al.norm_sqr() == p);
        if same {
            Ok((g, p))
        } else {
            Err(SpinBathError::NotHomogeneous)
        }
    }
}

/// Layout `S ⊗ E1 ⊗ ... ⊗ EN`.
pub fn layout(n_env: usize) -> SpaceLayout {
    SpaceLayout::new(
        std::iter::once(("S".to_string(), 2)).chain((1..=n_env).map(|k| (format!("E{k}"), 2))),
    )
    .expect("generated labels are unique")
}

pub fn env_labels(n_env: usize) -> Vec<String> {
    (1..=n_env).map(|k| format!("E{k}")).collect()
}

pub fn z_analytic(p: &SpinBathParams, t: f64) -> C64 {
    p.couplings
        .iter()
        .zip(&p.env_amps)
        .map(|(&g, (al, be))| {
            C64::from_polar(al.norm_sqr(), g * t) + C64::from_polar(be.norm_sqr(), -g * t)
        })
        .product()
}

/// `|z(t)|² = Π_k {1 + [(|α_k|² − |β_k|²)² − 1] sin²(g_k t)}`.
pub fn z_mod_sq(p: &SpinBathParams, t: f64) -> f64 {
    p.couplings
        .iter()
        .zip(&p.env_amps)
        .map(|(&g, (al, be))| {
            let bias = al.norm_sqr() - be.norm_sqr();
            let s = (g * t).sin();
            1.0 + (bias * bias - 1.0) * s * s
        })
        .product()
}

/// `ρ_S(t) = |a|²|↑⟩⟨↑| + |b|²|↓⟩⟨↓| + a b* ⟨E_↓|E_↑⟩ |↑⟩⟨↓| + h.c.`
///
/// With `z = ⟨E_↑|E_↓⟩` the `|↑⟩⟨↓|` element is `a b* z*`; its modulus
/// `|z||a||b|` is the interference weight.
pub fn reduced_density(p: &SpinBathParams, t: f64) -> DensityOperator {
    let z = z_analytic(p, t);
    let off = z.conj() * p.a * p.b.conj();
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(p.a.norm_sqr(), 0.0), off, off.conj(), C64::new(p.b.norm_sqr(), 0.0)],
    );
    DensityOperator::new(SpaceLayout::single("S", 2).expect("valid label"), m)
        .expect("spin-bath reduced state is a density operator")
}

/// `2^{-N} Π_k [1 + (|α_k|² − |β_k|²)²]`.
pub fn long_time_average(p: &SpinBathParams) -> f64 {
    p.env_amps
        .iter()
        .map(|(al, be)| {
            let bias = al.norm_sqr() - be.norm_sqr();
            0.5 * (1.0 + bias * bias)
        })
        .product()
}

/// Uniform-sample average of `|z|²` over `[0, t_max]`.
pub fn time_average_z_mod_sq(p: &SpinBathParams, t_max: f64, samples: usize) -> f64 {
    let n = samples.max(1);
    (0..n)
        .map(|i| z_mod_sq(p, t_max * (i as f64 + 0.5) / n as f64))
        .sum::<f64>()
        / n as f64
}

/// `z(t)` evaluated through the binomial sum over `l` flipped environment spins.
pub fn binomial_z(p: &SpinBathParams, t: f64) -> Result<C64, SpinBathError> {
    let (g, prob) = p.homogeneous_parts()?;
    let n = p.n_env();
    Ok(binomial_weights(n, prob)
        .into_iter()
        .enumerate()
        .map(|(l, w)| C64::from_polar(w, g * (2.0 * l as f64 - n as f64) * t))
        .sum())
}

/// `C(N,l) p^l (1−p)^{N−l}` for `l = 0..=N`, evaluated in log space.
fn binomial_weights(n: usize, prob: f64) -> Vec<f64> {
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let q = 1.0 - prob;
    (0..=n)
        .map(|l| {
            let k = (n - l) as f64;
            let l_f = l as f64;
            if (prob == 0.0 && l > 0) || (q == 0.0 && l < n) {
                return 0.0;
            }
            let lp = if l == 0 { 0.0 } else { l_f * prob.ln() };
            let lq = if l == n { 0.0 } else { k * q.ln() };
            (ln_fact[n] - ln_fact[l] - ln_fact[n - l] + lp + lq).exp()
        })
        .collect()
}

/// Gaussian description of `z(t)` for homogeneous parameters.
#[derive(Debug, Clone)]
pub struct GaussianLimit {
    /// Mean of the phase distribution `g N (2|α|² − 1)`.
    pub a_moment: f64,
    /// Standard deviation of the phase distribution `2 g √(N |α|²|β|²)`.
    pub b_moment: f64,
    /// Phase slope at `t = 0` from an odd-polynomial fit of `arg z`.
    pub a_fit: f64,
    /// Width from least squares of `ln|z|` against `t²`.
    pub b_fit: f64,
    /// Prefactor `e^{c}` of the fitted envelope.
    pub prefactor: f64,
    /// End of the decay window `3 / b_fit`.
    pub window_end: f64,
    /// `max | |z(t)| − prefactor·e^{−B²t²/2} |` over the decay window.
    pub max_envelope_deviation: f64,
}

impl GaussianLimit {
    pub fn envelope(&self, t: f64) -> f64 {
        self.prefactor * (-0.5 * self.b_fit * self.b_fit * t * t).exp()
    }
}

fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    design
        .clone()
        .svd(true, true)
        .solve(y, 1e-14)
        .expect("svd computed with u and v")
}

const FIT_SAMPLES: usize = 401;

/// Fits `z(t) ∝ e^{iAt} e^{−B²t²/2}` to the binomial-exact `z(t)`.
pub fn gaussian_limit(p: &SpinBathParams) -> Result<GaussianLimit, SpinBathError> {
    let (g, prob) = p.homogeneous_parts()?;
    let n = p.n_env() as f64;
    let a_moment = g * n * (2.0 * prob - 1.0);
    let b_moment = 2.0 * g.abs() * (n * prob * (1.0 - prob)).sqrt();
    if b_moment == 0.0 {
        return Err(SpinBathError::InvalidParams(
            "no decay: environment in an interaction eigenstate or zero coupling".into(),
        ));
    }

    // ln|z| = c − (B²/2) t² on the region |z| ≳ e^{-2}
    let fit_end = 2.0 / b_moment;
    let ts: Vec<f64> = (0..FIT_SAMPLES).map(|i| fit_end * i as f64 / (FIT_SAMPLES - 1) as f64).collect();
    let zs: Vec<C64> = ts.iter().map(|&t| binomial_z(p, t)).collect::<Result<_, _>>()?;
    let design = DMatrix::from_fn(ts.len(), 2, |i, j| if j == 0 { 1.0 } else { ts[i] * ts[i] });
    let y = DVector::from_iterator(ts.len(), zs.iter().map(|z| z.norm().ln()));
    let coef = least_squares(&design, &y);
    let b_fit = (-2.0 * coef[1]).max(0.0).sqrt();
    let prefactor = coef[0].exp();

    // arg z = A t + c3 t³ + c5 t⁵ on a short window, continuous unwrap
    let phase_end = 0.5 / b_moment;
    let pts: Vec<f64> = (0..FIT_SAMPLES).map(|i| phase_end * i as f64 / (FIT_SAMPLES - 1) as f64).collect();
    let mut phases = Vec::with_capacity(pts.len());
    let mut prev = 0.0f64;
    for &t in &pts {
        let raw = binomial_z(p, t)?.arg();
        let mut ph = raw;
        while ph - prev > std::f64::consts::PI {
            ph -= std::f64::consts::TAU;
        }
        while ph - prev < -std::f64::consts::PI {
            ph += std::f64::consts::TAU;
        }
        phases.push(ph);
        prev = ph;
    }
    let design = DMatrix::from_fn(pts.len(), 3, |i, j| pts[i].powi(2 * j as i32 + 1));
    let a_fit = least_squares(&design, &DVector::from_vec(phases))[0];

    let limit = GaussianLimit {
        a_moment,
        b_moment,
        a_fit,
        b_fit,
        prefactor,
        window_end: 3.0 / b_fit,
        max_envelope_deviation: 0.0,
    };
    let mut dev = 0.0f64;
    for i in 0..=1000 {
        let t = limit.window_end * i as f64 / 1000.0;
        dev = dev.max((binomial_z(p, t)?.norm() - limit.envelope(t)).abs());
    }
    Ok(GaussianLimit { max_envelope_deviation: dev, ..limit })
}

/// Initial environment product `⊗_k (α_k|↑_k⟩ + β_k|↓_k⟩)`, `↑` = index 0.
pub fn environment_state(p: &SpinBathParams) -> PureState {
    let mut v = CVector::from_element(1, C64::new(1.0, 0.0));
    for (al, be) in &p.env_amps {
        v = v.kronecker(&CVector::from_vec(vec![*al, *be]));
    }
    let labels = env_labels(p.n_env());
    let layout = SpaceLayout::new(labels.into_iter().map(|l| (l, 2))).expect("unique labels");
    PureState::from_parts_unchecked(layout, v)
}

pub fn system_state(p: &SpinBathParams) -> PureState {
    PureState::from_parts_unchecked(
        SpaceLayout::single("S", 2).expect("valid label"),
        CVector::from_vec(vec![p.a, p.b]),
    )
}

/// Eigenvalue of `Σ_k (g_k/2) σ_z^(k)` on environment basis state `e`.
fn env_energy(p: &SpinBathParams, e: usize) -> f64 {
    let n = p.n_env();
    p.couplings
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let down = (e >> (n - 1 - k)) & 1 == 1;
            if down { -0.5 * g } else { 0.5 * g }
        })
        .sum()
}

/// Environment branches `(|E_↑(t)⟩, |E_↓(t)⟩)` on `2^N` amplitudes, built by
/// applying the diagonal phases of `exp(-iHt)` to the initial environment.
pub fn brute_force_branches(p: &SpinBathParams, t: f64) -> Result<(CVector, CVector), SpinBathError> {
    let n = p.n_env();
    if n > MAX_BRUTE_FORCE_ENV {
        return Err(SpinBathError::SizeGuard { n, max: MAX_BRUTE_FORCE_ENV });
    }
    let env0 = environment_state(p).into_amplitudes();
    let mut up = env0.clone();
    let mut down = env0;
    for e in 0..up.len() {
        let w = env_energy(p, e);
        up[e] *= C64::from_polar(1.0, -w * t);
        down[e] *= C64::from_polar(1.0, w * t);
    }
    Ok((up, down))
}

/// `|ψ(t)⟩ = a|↑⟩|E_↑(t)⟩ + b|↓⟩|E_↓(t)⟩` on the full `2^(N+1)` space.
pub fn brute_force_evolve(p: &SpinBathParams, t: f64) -> Result<PureState, SpinBathError> {
    let (up, down) = brute_force_branches(p, t)?;
    let half = up.len();
    let mut v = CVector::zeros(2 * half);
    for e in 0..half {
        v[e] = p.a * up[e];
        v[half + e] = p.b * down[e];
    }
    Ok(PureState::from_parts_unchecked(layout(p.n_env()), v))
}

/// Dense `H_SE` on `S ⊗ E1 ⊗ ... ⊗ EN`.
pub fn hamiltonian(p: &SpinBathParams) -> Result<Observable, SpinBathError> {
    let n = p.n_env();
    if n > MAX_DENSE_ENV {
        return Err(SpinBathError::SizeGuard { n, max: MAX_DENSE_ENV });
    }
    let half = 1usize << n;
    let d = 2 * half;
    let mut m = CMatrix::zeros(d, d);
    for e in 0..half {
        let w = env_energy(p, e);
        m[(e, e)] = C64::new(w, 0.0);
        m[(half + e, half + e)] = C64::new(-w, 0.0);
    }
    Ok(Observable::new(layout(n), m)?)
}

/// `z(t)` sampled on `times`.
#[derive(Debug, Clone)]
pub struct InterferenceTrace {
    pub times: Vec<f64>,
    pub z_values: Vec<C64>,
}

pub fn interference_trace(p: &SpinBathParams, times: &[f64]) -> InterferenceTrace {
    InterferenceTrace {
        times: times.to_vec(),
        z_values: times.iter().map(|&t| z_analytic(p, t)).collect(),
    }
}

const RECURRENCE_LEVEL: f64 = 0.99;

/// Times at which coherence returns (`|z| > 0.99`) after the initial decay.
///
/// Each contiguous run of samples above the level contributes one time, the
/// location of the `|z|` maximum refined by golden-section search. The run
/// that starts at `t = 0` is the undecayed initial window and is skipped.
pub fn recurrence_scan(p: &SpinBathParams, t_max: f64, dt: f64) -> Vec<f64> {
    if !(dt > 0.0) || !(t_max > 0.0) {
        return Vec::new();
    }
    let level = RECURRENCE_LEVEL * RECURRENCE_LEVEL;
    let steps = (t_max / dt).floor() as usize;
    let mut out = Vec::new();
    let mut in_initial = true;
    let mut run: Option<(usize, f64)> = None; // (index of max, value)
    for i in 0..=steps {
        let t = i as f64 * dt;
        let v = z_mod_sq(p, t);
        if v > level {
            if in_initial {
                continue;
            }
            match run {
                Some((_, best)) if best >= v => {}
                _ => run = Some((i, v)),
            }
        } else {
            in_initial = false;
            if let Some((idx, _)) = run.take() {
                out.push(refine_peak(p, idx as f64 * dt, dt));
            }
        }
    }
    if let Some((idx, _)) = run {
        out.push(refine_peak(p, idx as f64 * dt, dt));
    }
    out
}

fn refine_peak(p: &SpinBathParams, center: f64, dt: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = ((center - dt).max(0.0), center + dt);
    for _ in 0..100 {
        let m1 = hi - inv_phi * (hi - lo);
        let m2 = lo + inv_phi * (hi - lo);
        if z_mod_sq(p, m1) < z_mod_sq(p, m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    0.5 * (lo + hi)
}

/// Mean and root-mean-square of `|z(t)|` sampled uniformly on `[t_start, t_end]`.
pub fn fluctuation_stats(p: &SpinBathParams, t_start: f64, t_end: f64, samples: usize) -> (f64, f64) {
    let n = samples.max(1);
    let (mut s1, mut s2) = (0.0, 0.0);
    for i in 0..n {
        let t = t_start + (t_end - t_start) * (i as f64 + 0.5) / n as f64;
        let m2 = z_mod_sq(p, t);
        s1 += m2.sqrt();
        s2 += m2;
    }
    (s1 / n as f64, (s2 / n as f64).sqrt())
}
