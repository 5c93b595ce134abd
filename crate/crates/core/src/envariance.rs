//! Environment-assisted invariance: envariant transforms, the equal-amplitude
//! probability argument and its counting extension to rational weights.

use nalgebra::Matrix2;
use num_integer::Integer;
use num_rational::Ratio;
use thiserror::Error;

use crate::hilbert::{HilbertError, PureState, SpaceLayout};
use crate::linalg::{CMatrix, CVector};
use crate::measurement::orthonormality_residual;
use crate::C64;

pub type Weight = Ratio<u64>;

/// Largest common denominator accepted by [`fine_grain`].
pub const MAX_DENOMINATOR: u64 = 1_000_000;
/// Equal-amplitude tolerance and per-step residual bound of the derivation.
pub const EQUALITY_TOL: f64 = 1e-12;
/// Up to this many terms every transposition is checked; above it only
/// adjacent ones, which generate all permutations.
pub const ALL_PAIRS_LIMIT: usize = 16;
/// Largest term count for which [`SchmidtState::standard`] will build vectors.
pub const MAX_EXPLICIT_TERMS: usize = 64;

#[derive(Debug, Error)]
pub enum EnvarianceError {
    #[error("expected {expected} Schmidt terms, got {got}")]
    ArityError { expected: usize, got: usize },
    #[error("Schmidt coefficients differ by {0:e}")]
    NotEqualAmplitude(f64),
    #[error("invalid Schmidt state: {0}")]
    InvalidState(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("common denominator {0} exceeds {MAX_DENOMINATOR}")]
    DenominatorTooLarge(u64),
    #[error("{0:?} not implemented")]
    Unsupported(LinkingAssumption),
    #[error("step {step:?} failed on pair {pair:?} with residual {residual:e}")]
    ProofFailed { step: Step, pair: (usize, usize), residual: f64 },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// `Σ_k c_k e^{iφ_k} |s_k⟩|e_k⟩`.
#[derive(Debug, Clone)]
pub struct SchmidtState {
    coefficients: Vec<f64>,
    phases: Vec<f64>,
    bases: Option<Bases>,
}

#[derive(Debug, Clone)]
struct Bases {
    system_layout: SpaceLayout,
    system: Vec<CVector>,
    env_layout: SpaceLayout,
    env: Vec<CVector>,
}

impl SchmidtState {
    /// State over explicit orthonormal families on `S` and `E`.
    pub fn new(
        coefficients: Vec<f64>,
        phases: Vec<f64>,
        system_layout: SpaceLayout,
        system_basis: Vec<CVector>,
        env_layout: SpaceLayout,
        env_basis: Vec<CVector>,
    ) -> Result<Self, EnvarianceError> {
        let k = coefficients.len();
        if system_basis.len() != k || env_basis.len() != k {
            return Err(EnvarianceError::InvalidState(format!(
                "{k} coefficients, {} system and {} environment vectors",
                system_basis.len(),
                env_basis.len()
            )));
        }
        system_layout.join(&env_layout)?;
        if system_basis.iter().any(|v| v.len() != system_layout.dim())
            || env_basis.iter().any(|v| v.len() != env_layout.dim())
        {
            return Err(EnvarianceError::InvalidState("basis vector length mismatch".into()));
        }
        for (name, b) in [("system", &system_basis), ("environment", &env_basis)] {
            let r = orthonormality_residual(b);
            if r > 1e-10 {
                return Err(EnvarianceError::InvalidState(format!("{name} basis not orthonormal ({r:e})")));
            }
        }
        let mut s = Self::abstract_frame(coefficients, phases)?;
        s.bases = Some(Bases { system_layout, system: system_basis, env_layout, env: env_basis });
        Ok(s)
    }

    /// State given only in its own Schmidt frame, with no vectors attached.
    pub fn abstract_frame(coefficients: Vec<f64>, phases: Vec<f64>) -> Result<Self, EnvarianceError> {
        if coefficients.is_empty() {
            return Err(EnvarianceError::InvalidState("no terms".into()));
        }
        if phases.len() != coefficients.len() {
            return Err(EnvarianceError::InvalidState(format!(
                "{} coefficients but {} phases",
                coefficients.len(),
                phases.len()
            )));
        }
        if coefficients.iter().chain(&phases).any(|x| !x.is_finite()) || coefficients.iter().any(|&c| c <= 0.0) {
            return Err(EnvarianceError::InvalidState("coefficients must be positive and finite".into()));
        }
        let norm: f64 = coefficients.iter().map(|c| c * c).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(EnvarianceError::InvalidState(format!("Σ c² = {norm}")));
        }
        Ok(Self { coefficients, phases, bases: None })
    }

    /// Standard bases of `S = C^K` and `E = C^K` labelled `S` and `E`.
    pub fn standard(coefficients: Vec<f64>, phases: Vec<f64>) -> Result<Self, EnvarianceError> {
        let k = coefficients.len();
        if k > MAX_EXPLICIT_TERMS {
            return Err(EnvarianceError::InvalidState(format!("{k} terms is too many for explicit vectors")));
        }
        let basis: Vec<CVector> = (0..k).map(|i| unit(k, i)).collect();
        let sl = SpaceLayout::single("S", k.max(1))?;
        let el = SpaceLayout::single("E", k.max(1))?;
        Self::new(coefficients, phases, sl, basis.clone(), el, basis)
    }

    /// Equal-amplitude state with the given phases.
    pub fn equal(phases: Vec<f64>) -> Result<Self, EnvarianceError> {
        let c = (phases.len() as f64).sqrt().recip();
        Self::standard(vec![c; phases.len()], phases)
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn system_basis(&self) -> Option<&[CVector]> {
        self.bases.as_ref().map(|b| b.system.as_slice())
    }

    pub fn env_basis(&self) -> Option<&[CVector]> {
        self.bases.as_ref().map(|b| b.env.as_slice())
    }

    fn explicit(&self) -> Result<&Bases, EnvarianceError> {
        self.bases
            .as_ref()
            .ok_or_else(|| EnvarianceError::InvalidState("state has no explicit bases".into()))
    }

    pub fn layout(&self) -> Result<SpaceLayout, EnvarianceError> {
        let b = self.explicit()?;
        Ok(b.system_layout.join(&b.env_layout)?)
    }

    pub fn to_pure(&self) -> Result<PureState, EnvarianceError> {
        let b = self.explicit()?;
        let layout = b.system_layout.join(&b.env_layout)?;
        let mut v = CVector::zeros(layout.dim());
        for k in 0..self.len() {
            v += b.system[k].kronecker(&b.env[k]) * self.amplitude(k);
        }
        Ok(PureState::new(layout, v)?)
    }

    fn amplitude(&self, k: usize) -> C64 {
        C64::from_polar(self.coefficients[k], self.phases[k])
    }

    /// Largest pairwise coefficient difference.
    pub fn amplitude_spread(&self) -> f64 {
        let max = self.coefficients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.coefficients.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

fn unit(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = C64::new(1.0, 0.0);
    v
}

/// `û_S ⊗ Î_E` followed by `Î_S ⊗ û_E`.
#[derive(Debug, Clone)]
pub struct PairedTransform {
    u_system: CMatrix,
    u_env: CMatrix,
}

fn check_unitary(m: &CMatrix, what: &str) -> Result<(), EnvarianceError> {
    if !m.is_square() {
        return Err(EnvarianceError::InvalidTransform(format!("{what} is not square")));
    }
    let n = m.nrows();
    let r = crate::linalg::max_abs_diff(&(m.adjoint() * m), &CMatrix::identity(n, n));
    if r > 1e-10 {
        return Err(EnvarianceError::InvalidTransform(format!("{what} not unitary ({r:e})")));
    }
    Ok(())
}

impl PairedTransform {
    pub fn new(u_system: CMatrix, u_env: CMatrix) -> Result<Self, EnvarianceError> {
        check_unitary(&u_system, "system unitary")?;
        check_unitary(&u_env, "environment unitary")?;
        Ok(Self { u_system, u_env })
    }

    pub fn u_system(&self) -> &CMatrix {
        &self.u_system
    }

    pub fn u_env(&self) -> &CMatrix {
        &self.u_env
    }

    fn dims_match(&self, psi: &SchmidtState) -> Result<(), EnvarianceError> {
        let b = psi.explicit()?;
        if self.u_system.nrows() != b.system_layout.dim() || self.u_env.nrows() != b.env_layout.dim() {
            return Err(EnvarianceError::InvalidTransform("dimension mismatch with state".into()));
        }
        Ok(())
    }

    /// `(û_S ⊗ Î_E)|ψ⟩`.
    pub fn apply_system(&self, psi: &PureState) -> PureState {
        let id = CMatrix::identity(psi.layout().dim() / self.u_system.nrows(), psi.layout().dim() / self.u_system.nrows());
        let u = self.u_system.kronecker(&id);
        PureState::from_parts_unchecked(psi.layout().clone(), u * psi.amplitudes())
    }

    /// `(Î_S ⊗ û_E)|ψ⟩`.
    pub fn apply_env(&self, psi: &PureState) -> PureState {
        let d = psi.layout().dim() / self.u_env.nrows();
        let u = CMatrix::identity(d, d).kronecker(&self.u_env);
        PureState::from_parts_unchecked(psi.layout().clone(), u * psi.amplitudes())
    }
}

/// `|⟨ψ|Û_E Û_S|ψ⟩| > 1 − tol`.
pub fn is_envariant(psi: &SchmidtState, pair: &PairedTransform, tol: f64) -> Result<bool, EnvarianceError> {
    pair.dims_match(psi)?;
    let v = psi.to_pure()?;
    let out = pair.apply_env(&pair.apply_system(&v));
    Ok(v.fidelity(&out)? > 1.0 - tol)
}

/// `Σ_k w_k |b_k⟩⟨b_k| + (I − Σ_k |b_k⟩⟨b_k|)`.
fn diagonal_in(basis: &[CVector], dim: usize, weights: impl Fn(usize) -> C64) -> CMatrix {
    let mut m = CMatrix::identity(dim, dim);
    for (k, b) in basis.iter().enumerate() {
        m += b * b.adjoint() * (weights(k) - C64::new(1.0, 0.0));
    }
    m
}

/// Phase transform `û_S(ξ) = Σ e^{iξ_k} |s_k⟩⟨s_k|` with its partner `û_E(−ξ)`.
pub fn phase_transform(psi: &SchmidtState, xi: &[f64]) -> Result<PairedTransform, EnvarianceError> {
    if xi.len() != psi.len() {
        return Err(EnvarianceError::ArityError { expected: psi.len(), got: xi.len() });
    }
    let b = psi.explicit()?;
    let us = diagonal_in(&b.system, b.system_layout.dim(), |k| C64::from_polar(1.0, xi[k]));
    let ue = diagonal_in(&b.env, b.env_layout.dim(), |k| C64::from_polar(1.0, -xi[k]));
    PairedTransform::new(us, ue)
}

/// `e^{iξ_12}|b_1⟩⟨b_2| + e^{iξ_21}|b_2⟩⟨b_1|` plus identity off the pair.
fn exchange(basis: &[CVector], dim: usize, xi12: f64, xi21: f64) -> CMatrix {
    let (b1, b2) = (&basis[0], &basis[1]);
    let mut m = CMatrix::identity(dim, dim) - b1 * b1.adjoint() - b2 * b2.adjoint();
    m += b1 * b2.adjoint() * C64::from_polar(1.0, xi12);
    m += b2 * b1.adjoint() * C64::from_polar(1.0, xi21);
    m
}

fn two_terms(psi: &SchmidtState) -> Result<(), EnvarianceError> {
    if psi.len() != 2 {
        return Err(EnvarianceError::ArityError { expected: 2, got: psi.len() });
    }
    Ok(())
}

/// Counterswap phases `(η_12, η_21)` that undo a swap with `(ξ_12, ξ_21)`.
///
/// `η_12` multiplies `|e_1⟩⟨e_2|`.
pub fn matching_phases(psi: &SchmidtState, xi12: f64, xi21: f64) -> (f64, f64) {
    let (p1, p2) = (psi.phases[0], psi.phases[1]);
    (p1 - p2 - xi12, p2 - p1 - xi21)
}

/// The swap `û_S(1↔2)` paired with the matching counterswap on `E`.
pub fn swap_pair(psi: &SchmidtState, xi12: f64, xi21: f64) -> Result<PairedTransform, EnvarianceError> {
    two_terms(psi)?;
    let b = psi.explicit()?;
    let (eta12, eta21) = matching_phases(psi, xi12, xi21);
    PairedTransform::new(
        exchange(&b.system, b.system_layout.dim(), xi12, xi21),
        exchange(&b.env, b.env_layout.dim(), eta12, eta21),
    )
}

/// `(û_S(1↔2) ⊗ Î_E)|ψ⟩`.
pub fn swap(psi: &SchmidtState, xi12: f64, xi21: f64) -> Result<PureState, EnvarianceError> {
    let pair = swap_pair(psi, xi12, xi21)?;
    Ok(pair.apply_system(&psi.to_pure()?))
}

/// Applies the counterswap matching `(ξ_12, ξ_21)` on `E` to `state`.
pub fn counterswap(state: &PureState, psi: &SchmidtState, xi12: f64, xi21: f64) -> Result<PureState, EnvarianceError> {
    let pair = swap_pair(psi, xi12, xi21)?;
    if state.layout() != &psi.layout()? {
        return Err(HilbertError::LayoutMismatch(format!("state on `{}`", state.layout())).into());
    }
    Ok(pair.apply_env(state))
}

/// The assumption tying Schmidt pairs to outcome probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkingAssumption {
    /// A4: outcomes of `|s_k⟩` and `|e_k⟩` are perfectly correlated.
    PerfectCorrelation,
    /// Links the state of S directly to outcome probabilities; not implemented.
    StateDetermined,
    /// Second alternative link between state and probabilities; not implemented.
    Alternative,
}

/// One link in the equality chain `p(s_i) = … = p(s_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// `Û_E Û_S ψ = ψ`, so `p(s_i)` after both equals `p(s_i)` before.
    Restoration,
    /// The counterswap on E leaves the reduced state of S unchanged.
    EnvironmentActionInvisible,
    /// After the swap, `|s_i⟩` is perfectly correlated with `|e_j⟩`.
    SwappedCorrelation,
    /// The swap on S leaves the reduced state of E unchanged.
    SystemActionInvisible,
    /// In ψ, `|s_j⟩` is perfectly correlated with `|e_j⟩`.
    OriginalCorrelation,
}

impl Step {
    pub const CHAIN: [Step; 5] = [
        Step::Restoration,
        Step::EnvironmentActionInvisible,
        Step::SwappedCorrelation,
        Step::SystemActionInvisible,
        Step::OriginalCorrelation,
    ];

    pub fn assumptions(self) -> &'static str {
        match self {
            Step::Restoration => "A2,A3",
            Step::EnvironmentActionInvisible | Step::SystemActionInvisible => "A1,A2",
            Step::SwappedCorrelation | Step::OriginalCorrelation => "A4",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::Restoration => "restoration",
            Step::EnvironmentActionInvisible => "env-action-invisible",
            Step::SwappedCorrelation => "swapped-correlation",
            Step::SystemActionInvisible => "system-action-invisible",
            Step::OriginalCorrelation => "original-correlation",
        }
    }
}

/// Aggregate of one chain link over every checked pair.
#[derive(Debug, Clone)]
pub struct ProofStep {
    pub step: Step,
    pub pairs_checked: usize,
    pub max_residual: f64,
    pub worst_pair: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct BornDerivation {
    pub probabilities: Vec<Weight>,
    pub trace: Vec<ProofStep>,
}

type Block = Matrix2<C64>;

fn block_rho_s(a: &Block) -> Block {
    a * a.adjoint()
}

fn block_rho_e(a: &Block) -> Block {
    a.transpose() * a.conjugate()
}

fn block_diff(a: &Block, b: &Block) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Residuals of the five links for the transposition `(i, j)`, computed on
/// the 2×2 block of the amplitude matrix the swap touches.
fn pair_residuals(psi: &SchmidtState, i: usize, j: usize, untouched: f64) -> [f64; 5] {
    let zero = C64::new(0.0, 0.0);
    let (ai, aj) = (psi.amplitude(i), psi.amplitude(j));
    let a = Block::new(ai, zero, zero, aj);
    // swap phases are fixed to zero; the counterswap absorbs the state's phases
    let (xi_ij, xi_ji) = (0.0, 0.0);
    let us = Block::new(zero, C64::from_polar(1.0, xi_ij), C64::from_polar(1.0, xi_ji), zero);
    let (pi, pj) = (psi.phases[i], psi.phases[j]);
    let eta_ij = pi - pj - xi_ij;
    let eta_ji = pj - pi - xi_ji;
    let ue = Block::new(zero, C64::from_polar(1.0, eta_ij), C64::from_polar(1.0, eta_ji), zero);
    let swapped = us * a;
    let restored = swapped * ue.transpose();

    let overlap = untouched + (a.adjoint() * restored).trace().re;
    let restoration = (1.0 - overlap.abs()).max(0.0);
    let env_invisible = block_diff(&block_rho_s(&restored), &block_rho_s(&swapped));
    let swapped_corr = swapped[(0, 0)].norm_sqr().max(swapped[(1, 1)].norm_sqr());
    let system_invisible = block_diff(&block_rho_e(&swapped), &block_rho_e(&a));
    let original_corr = a[(0, 1)].norm_sqr().max(a[(1, 0)].norm_sqr());
    [restoration, env_invisible, swapped_corr, system_invisible, original_corr]
}

fn pairs(k: usize) -> Vec<(usize, usize)> {
    if k <= ALL_PAIRS_LIMIT {
        (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
    } else {
        (0..k - 1).map(|i| (i, i + 1)).collect()
    }
}

/// Equal Schmidt weights force equal outcome probabilities `1/K`.
pub fn derive_equal_probabilities(psi: &SchmidtState) -> Result<BornDerivation, EnvarianceError> {
    derive_equal_probabilities_with(psi, LinkingAssumption::PerfectCorrelation)
}

pub fn derive_equal_probabilities_with(
    psi: &SchmidtState,
    link: LinkingAssumption,
) -> Result<BornDerivation, EnvarianceError> {
    if link != LinkingAssumption::PerfectCorrelation {
        return Err(EnvarianceError::Unsupported(link));
    }
    let spread = psi.amplitude_spread();
    if spread > EQUALITY_TOL {
        return Err(EnvarianceError::NotEqualAmplitude(spread));
    }
    let k = psi.len();
    let total: f64 = psi.coefficients.iter().map(|c| c * c).sum();
    let mut trace: Vec<ProofStep> = Step::CHAIN
        .iter()
        .map(|&step| ProofStep { step, pairs_checked: 0, max_residual: 0.0, worst_pair: (0, 0) })
        .collect();
    for (i, j) in pairs(k) {
        let untouched = total - psi.coefficients[i].powi(2) - psi.coefficients[j].powi(2);
        for (entry, r) in trace.iter_mut().zip(pair_residuals(psi, i, j, untouched)) {
            entry.pairs_checked += 1;
            if r > entry.max_residual {
                entry.max_residual = r;
                entry.worst_pair = (i, j);
            }
            if r > EQUALITY_TOL {
                return Err(EnvarianceError::ProofFailed { step: entry.step, pair: (i, j), residual: r });
            }
        }
    }
    // the checked transpositions connect all terms, so the probabilities are
    // equal and normalization fixes them
    let p = Weight::new(1, k as u64);
    Ok(BornDerivation { probabilities: vec![p; k], trace })
}

/// Parses weights written as `m/M` (or an integer).
pub fn parse_weights<S: AsRef<str>>(items: &[S]) -> Result<Vec<Weight>, EnvarianceError> {
    items
        .iter()
        .map(|s| {
            let s = s.as_ref().trim();
            let bad = || EnvarianceError::InvalidWeights(format!("`{s}` is not of the form m/M"));
            let (n, d) = match s.split_once('/') {
                Some((n, d)) => (n.trim(), d.trim()),
                None => (s, "1"),
            };
            let n: u64 = n.parse().map_err(|_| bad())?;
            let d: u64 = d.parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Weight::new(n, d))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FineGrained {
    /// Common denominator `M`.
    pub denominator: u64,
    /// `m_k`; term `k` is split into this many equal branches.
    pub multiplicities: Vec<u64>,
    /// `M` equal-amplitude terms over (system ⊗ ancilla, environment).
    pub extended: SchmidtState,
    pub derivation: BornDerivation,
    /// `p(s_k)` obtained by counting branches; equals `m_k / M`.
    pub probabilities: Vec<Weight>,
}

impl FineGrained {
    /// Outcome `k` owning extended branch `b`.
    pub fn branch_outcome(&self, b: usize) -> usize {
        let mut acc = 0u64;
        for (k, &m) in self.multiplicities.iter().enumerate() {
            acc += m;
            if (b as u64) < acc {
                return k;
            }
        }
        panic!("branch {b} out of range")
    }
}

/// Splits term `k` with squared coefficient `m_k/M` into `m_k` equal branches
/// through an ancilla correlated with the environment, then applies the
/// equal-amplitude argument to the `M` branches.
pub fn fine_grain(weights: &[Weight]) -> Result<FineGrained, EnvarianceError> {
    fine_grain_with_phases(weights, &vec![0.0; weights.len()])
}

pub fn fine_grain_with_phases(weights: &[Weight], phases: &[f64]) -> Result<FineGrained, EnvarianceError> {
    if weights.is_empty() {
        return Err(EnvarianceError::InvalidWeights("no weights".into()));
    }
    if phases.len() != weights.len() {
        return Err(EnvarianceError::ArityError { expected: weights.len(), got: phases.len() });
    }
    if weights.iter().any(|w| *w.numer() == 0) {
        return Err(EnvarianceError::InvalidWeights("Schmidt weights must be positive".into()));
    }
    let mut m_den = 1u64;
    for w in weights {
        m_den = m_den.lcm(w.denom());
        if m_den > MAX_DENOMINATOR {
            return Err(EnvarianceError::DenominatorTooLarge(m_den));
        }
    }
    let multiplicities: Option<Vec<u64>> = weights.iter().map(|w| w.numer().checked_mul(m_den / w.denom())).collect();
    let total = multiplicities.as_ref().and_then(|m| m.iter().try_fold(0u64, |a, &x| a.checked_add(x)));
    let Some(multiplicities) = multiplicities.filter(|_| total == Some(m_den)) else {
        return Err(EnvarianceError::InvalidWeights("weights do not sum to 1".into()));
    };
    let m = m_den as usize;
    let c = (m_den as f64).sqrt().recip();
    let branch_phases: Vec<f64> = multiplicities
        .iter()
        .zip(phases)
        .flat_map(|(&mk, &ph)| std::iter::repeat_n(ph, mk as usize))
        .collect();
    let extended = SchmidtState { coefficients: vec![c; m], phases: branch_phases, bases: None };
    let derivation = derive_equal_probabilities(&extended)?;
    let mut probabilities = vec![Weight::new(0, 1); weights.len()];
    let mut b = 0usize;
    for (k, &mk) in multiplicities.iter().enumerate() {
        for _ in 0..mk {
            probabilities[k] += derivation.probabilities[b];
            b += 1;
        }
    }
    Ok(FineGrained { denominator: m_den, multiplicities, extended, derivation, probabilities })
}

/// Rational weights with denominator `max_denominator` closest to `weights`
/// (largest-remainder rounding, every weight kept positive), and the largest
/// absolute error incurred. The error is below `1/max_denominator` unless a
/// tiny weight had to be raised to `1/max_denominator`.
pub fn rational_approximation(weights: &[f64], max_denominator: u64) -> Result<(Vec<Weight>, f64), EnvarianceError> {
    let n = weights.len();
    if n == 0 || max_denominator == 0 || max_denominator > MAX_DENOMINATOR || (n as u64) > max_denominator {
        return Err(EnvarianceError::InvalidWeights("need 1 ≤ len ≤ denominator ≤ 10⁶".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(EnvarianceError::InvalidWeights("weights must be positive and finite".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(EnvarianceError::InvalidWeights(format!("weights sum to {total}")));
    }
    let md = max_denominator as f64;
    let mut counts: Vec<u64> = weights.iter().map(|w| ((w / total) * md).floor().max(1.0) as u64).collect();
    let mut assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = weights[a] / total * md - counts[a] as f64;
        let rb = weights[b] / total * md - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut idx = 0;
    while assigned < max_denominator {
        counts[order[idx % n]] += 1;
        assigned += 1;
        idx += 1;
    }
    while assigned > max_denominator {
        // take from the largest count that can spare one
        let k = (0..n).filter(|&k| counts[k] > 1).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).expect("n ≤ M");
        counts[k] -= 1;
        assigned -= 1;
    }
    let out: Vec<Weight> = counts.iter().map(|&c| Weight::new(c, max_denominator)).collect();
    let err = weights
        .iter()
        .zip(&counts)
        .map(|(w, &c)| (w / total - c as f64 / md).abs())
        .fold(0.0, f64::max);
    Ok((out, err))
}

pub fn to_f64(w: &Weight) -> f64 {
    *w.numer() as f64 / *w.denom() as f64
}

/// Exact sum, or `None` if an intermediate overflows `u64`.
pub fn weight_sum(weights: &[Weight]) -> Option<Weight> {
    weights.iter().try_fold(Weight::from_integer(0), |acc, w| {
        let l = acc.denom().lcm(w.denom());
        let a = acc.numer().checked_mul(l / acc.denom())?;
        let b = w.numer().checked_mul(l / w.denom())?;
        Some(Weight::new(a.checked_add(b)?, l))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DensityOperator;
    use crate::linalg::max_abs_diff;
    use crate::random;

    fn rho_s(p: &PureState) -> DensityOperator {
        p.reduced(&["S"]).unwrap()
    }

    #[test]
    fn phase_transform_envariant() {
        let psi = SchmidtState::standard(vec![0.8, 0.6], vec![0.3, -1.1]).unwrap();
        let pair = phase_transform(&psi, &[0.7, 2.0]).unwrap();
        assert!(is_envariant(&psi, &pair, 1e-12).unwrap());
        let before = rho_s(&psi.to_pure().unwrap());
        let after = rho_s(&pair.apply_system(&psi.to_pure().unwrap()));
        assert!(max_abs_diff(before.matrix(), after.matrix()) < 1e-12);
    }

    #[test]
    fn swap_counterswap_identity() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = SchmidtState::standard(vec![h, h], vec![0.4, 2.5]).unwrap();
        let s = swap(&psi, 0.9, -0.2).unwrap();
        let back = counterswap(&s, &psi, 0.9, -0.2).unwrap();
        assert!((back.amplitudes() - psi.to_pure().unwrap().amplitudes()).norm() < 1e-12);
        assert!(is_envariant(&psi, &swap_pair(&psi, 0.9, -0.2).unwrap(), 1e-12).unwrap());
        let sd = crate::hilbert::schmidt(&s, &["S"], &["E"]).unwrap();
        for c in sd.coefficients {
            assert!((c - h).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_unequal_exchanges_populations() {
        let psi = SchmidtState::standard(vec![0.8, 0.6], vec![0.0, 0.0]).unwrap();
        let s = swap(&psi, 0.0, 0.0).unwrap();
        let r = rho_s(&s);
        assert!((r.matrix()[(0, 0)].re - 0.36).abs() < 1e-12);
        assert!((r.matrix()[(1, 1)].re - 0.64).abs() < 1e-12);
        assert!(!is_envariant(&psi, &swap_pair(&psi, 0.0, 0.0).unwrap(), 1e-6).unwrap());
    }

    #[test]
    fn swap_with_identity_on_env_not_envariant() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = SchmidtState::standard(vec![h, h], vec![0.0, 1.3]).unwrap();
        let pair = swap_pair(&psi, 0.0, 0.0).unwrap();
        let lazy = PairedTransform::new(pair.u_system().clone(), CMatrix::identity(2, 2)).unwrap();
        assert!(!is_envariant(&psi, &lazy, 1e-6).unwrap());
    }

    #[test]
    fn swap_needs_two_terms() {
        let c = 3f64.sqrt().recip();
        let psi = SchmidtState::standard(vec![c; 3], vec![0.0; 3]).unwrap();
        assert!(matches!(swap(&psi, 0.0, 0.0), Err(EnvarianceError::ArityError { expected: 2, got: 3 })));
    }

    #[test]
    fn explicit_bases_random_frame() {
        let mut rng = random::stream(11, 0);
        let us = random::haar_unitary(3, &mut rng);
        let ue = random::haar_unitary(4, &mut rng);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = SchmidtState::new(
            vec![h, h],
            vec![0.2, -0.7],
            SpaceLayout::single("S", 3).unwrap(),
            vec![us.column(0).into_owned(), us.column(1).into_owned()],
            SpaceLayout::single("E", 4).unwrap(),
            vec![ue.column(2).into_owned(), ue.column(0).into_owned()],
        )
        .unwrap();
        assert!(is_envariant(&psi, &swap_pair(&psi, 1.0, 0.5).unwrap(), 1e-12).unwrap());
        let pair = phase_transform(&psi, &[0.4, 1.9]).unwrap();
        assert!(is_envariant(&psi, &pair, 1e-12).unwrap());
    }

    #[test]
    fn equal_probabilities() {
        for k in [1usize, 2, 5, 20] {
            let phases: Vec<f64> = (0..k).map(|i| 0.37 * i as f64).collect();
            let c = (k as f64).sqrt().recip();
            let psi = SchmidtState::abstract_frame(vec![c; k], phases).unwrap();
            let d = derive_equal_probabilities(&psi).unwrap();
            assert!(d.probabilities.iter().all(|p| *p == Weight::new(1, k as u64)));
            assert_eq!(d.trace.len(), 5);
            let expected_pairs = if k <= ALL_PAIRS_LIMIT { k * (k - 1) / 2 } else { k - 1 };
            assert!(d.trace.iter().all(|s| s.pairs_checked == expected_pairs && s.max_residual <= EQUALITY_TOL));
        }
    }

    #[test]
    fn unequal_rejected() {
        let psi = SchmidtState::standard(vec![0.8, 0.6], vec![0.0, 0.0]).unwrap();
        assert!(matches!(derive_equal_probabilities(&psi), Err(EnvarianceError::NotEqualAmplitude(_))));
        assert!(matches!(
            derive_equal_probabilities_with(&psi, LinkingAssumption::StateDetermined),
            Err(EnvarianceError::Unsupported(_))
        ));
    }

    #[test]
    fn fine_grain_examples() {
        let f = fine_grain(&parse_weights(&["1/3", "2/3"]).unwrap()).unwrap();
        assert_eq!(f.denominator, 3);
        assert_eq!(f.multiplicities, vec![1, 2]);
        assert_eq!(f.probabilities, vec![Weight::new(1, 3), Weight::new(2, 3)]);
        let f = fine_grain(&parse_weights(&["1/2", "1/2"]).unwrap()).unwrap();
        assert_eq!(f.denominator, 2);
        let f = fine_grain(&parse_weights(&["1/6", "1/3", "1/2"]).unwrap()).unwrap();
        assert_eq!(f.denominator, 6);
        assert_eq!(f.extended.len(), 6);
        assert_eq!((0..6).map(|b| f.branch_outcome(b)).collect::<Vec<_>>(), vec![0, 1, 1, 2, 2, 2]);
        assert_eq!(f.probabilities.iter().copied().sum::<Weight>(), Weight::new(1, 1));
    }

    #[test]
    fn weight_sum_is_exact_or_none() {
        let w = parse_weights(&["1/6", "1/3", "1/2"]).unwrap();
        assert_eq!(weight_sum(&w), Some(Weight::from_integer(1)));
        let huge = parse_weights(&["18446744073709551615/2", "1/3"]).unwrap();
        assert_eq!(weight_sum(&huge), None);
        assert!(fine_grain(&huge).is_err());
    }

    #[test]
    fn fine_grain_rejects() {
        assert!(matches!(fine_grain(&parse_weights(&["1/3", "1/3"]).unwrap()), Err(EnvarianceError::InvalidWeights(_))));
        assert!(matches!(
            fine_grain(&[Weight::new(1, 1_000_003), Weight::new(1_000_002, 1_000_003)]),
            Err(EnvarianceError::DenominatorTooLarge(_))
        ));
        assert!(parse_weights(&["a/3"]).is_err());
        assert!(parse_weights(&["1/0"]).is_err());
    }

    #[test]
    fn large_denominator_runs() {
        let f = fine_grain(&[Weight::new(1, 1_000_000), Weight::new(999_999, 1_000_000)]).unwrap();
        assert_eq!(f.probabilities[0], Weight::new(1, 1_000_000));
    }

    #[test]
    fn irrational_approximation() {
        let w = [0.5f64.sqrt().powi(2) * 0.6180339887498949, 1.0 - 0.5 * 0.6180339887498949];
        let (r, err) = rational_approximation(&w, 1000).unwrap();
        assert!(err <= 1e-3);
        assert_eq!(r.iter().copied().sum::<Weight>(), Weight::new(1, 1));
        let f = fine_grain(&r).unwrap();
        assert!((to_f64(&f.probabilities[0]) - w[0]).abs() <= err + 1e-15);
    }
}
