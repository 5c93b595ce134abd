//! Pointer-basis selection: commutativity criterion, predictability sieve,
//! regime classification and Schmidt-versus-pointer comparisons.

use thiserror::Error;

use crate::hilbert::{
    self, DensityOperator, HilbertError, Observable, Propagator, PureState, SpaceLayout,
};
use crate::linalg::{self, CMatrix, CVector};
use crate::spinbath::{self, SpinBathError, SpinBathParams};
use crate::C64;

const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EinselectionError {
    #[error("invalid projector: {0}")]
    InvalidProjector(String),
    #[error("projector family incomplete: {0}")]
    IncompleteFamily(String),
    #[error("both Hamiltonians vanish")]
    DegenerateSpec,
    #[error("invalid interaction spec: {0}")]
    InvalidSpec(String),
    #[error("regime thresholds must satisfy 0 < low < high, got ({0}, {1})")]
    InvalidThresholds(f64, f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    SpinBath(#[from] SpinBathError),
}

/// Self-Hamiltonian of one system factor plus an interaction on the whole space.
#[derive(Debug, Clone)]
pub struct InteractionSpec {
    layout: SpaceLayout,
    system: String,
    h_self: Observable,
    h_int: Observable,
}

impl InteractionSpec {
    pub fn new(
        layout: SpaceLayout,
        system: &str,
        h_self: Observable,
        h_int: Observable,
    ) -> Result<Self, EinselectionError> {
        let pos = layout
            .position(system)
            .ok_or_else(|| HilbertError::LabelNotFound(system.to_string()))?;
        if layout.factors().len() < 2 {
            return Err(EinselectionError::InvalidSpec("need at least one environment factor".into()));
        }
        let sys_layout = layout.sublayout(&[pos]);
        if h_self.layout() != &sys_layout {
            return Err(EinselectionError::InvalidSpec(format!(
                "self-Hamiltonian on `{}`, system factor is `{sys_layout}`",
                h_self.layout()
            )));
        }
        if h_int.layout() != &layout {
            return Err(EinselectionError::InvalidSpec(format!(
                "interaction on `{}`, joint space is `{layout}`",
                h_int.layout()
            )));
        }
        Ok(Self { layout, system: system.to_string(), h_self, h_int })
    }

    /// The spin-bath model with a vanishing system self-Hamiltonian.
    pub fn spin_bath(p: &SpinBathParams) -> Result<Self, EinselectionError> {
        let layout = spinbath::layout(p.n_env());
        let h_int = spinbath::hamiltonian(p)?;
        let h_self = Observable::zero(SpaceLayout::single("S", 2)?);
        Self::new(layout, "S", h_self, h_int)
    }

    pub fn with_self_hamiltonian(&self, h_self: Observable) -> Result<Self, EinselectionError> {
        Self::new(self.layout.clone(), &self.system, h_self, self.h_int.clone())
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn system_label(&self) -> &str {
        &self.system
    }

    pub fn system_layout(&self) -> SpaceLayout {
        let pos = self.layout.position(&self.system).expect("checked at construction");
        self.layout.sublayout(&[pos])
    }

    pub fn environment_layout(&self) -> SpaceLayout {
        let pos = self.layout.position(&self.system).expect("checked at construction");
        self.layout.sublayout(&self.layout.complement(&[pos]))
    }

    pub fn h_self(&self) -> &Observable {
        &self.h_self
    }

    pub fn h_int(&self) -> &Observable {
        &self.h_int
    }

    pub fn total(&self) -> Observable {
        let lifted = self.h_self.lift(&self.layout).expect("system factor is part of the layout");
        lifted.add(&self.h_int).expect("same layout")
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { h_self: self.h_self.scale(s), h_int: self.h_int.scale(s), ..self.clone() }
    }
}

/// Initial environment state, pure or mixed.
#[derive(Debug, Clone)]
pub enum Environment {
    Pure(PureState),
    Mixed(DensityOperator),
}

impl Environment {
    fn layout(&self) -> &SpaceLayout {
        match self {
            Environment::Pure(p) => p.layout(),
            Environment::Mixed(r) => r.layout(),
        }
    }
}

/// Evolves `system ⊗ env` for time `t` under `u` and returns the reduced system state.
fn evolve_reduced(
    spec: &InteractionSpec,
    u: &Propagator,
    system: &PureState,
    env: &Environment,
) -> Result<DensityOperator, EinselectionError> {
    let keep = [spec.system.as_str()];
    Ok(match env {
        Environment::Pure(e) => {
            let joint = hilbert::tensor(&[system, e])?.reorder(&spec.layout)?;
            u.apply_pure(&joint)?.reduced(&keep)?
        }
        Environment::Mixed(rho) => {
            let joint = hilbert::tensor_density(&[&system.density(), rho])?.reorder(&spec.layout)?;
            hilbert::partial_trace(&u.apply_density(&joint)?, &keep)?
        }
    })
}

fn check_environment(spec: &InteractionSpec, env: &Environment) -> Result<(), EinselectionError> {
    let expected = spec.environment_layout();
    let got = env.layout();
    let labels: Vec<&str> = got.labels().collect();
    let ok = got.factors().len() == expected.factors().len()
        && expected.positions_of(&labels).is_ok()
        && got.dim() == expected.dim();
    if !ok {
        return Err(EinselectionError::InvalidSpec(format!(
            "environment state on `{got}`, spec expects `{expected}`"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CommutationReport {
    /// `‖[P_n, H]‖_F` per projector.
    pub norms: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

fn check_projector(p: &Observable) -> Result<(), EinselectionError> {
    let m = p.matrix();
    let idem = linalg::max_abs_diff(&(m * m), m);
    if idem > PROJECTOR_TOL {
        return Err(EinselectionError::InvalidProjector(format!("P² ≠ P (residual {idem:e})")));
    }
    Ok(())
}

/// Lifts `p` to `full` unless it already lives there.
fn on_layout(p: &Observable, full: &SpaceLayout) -> Result<Observable, EinselectionError> {
    if p.layout() == full {
        Ok(p.clone())
    } else {
        Ok(p.lift(full)?)
    }
}

/// Commutativity criterion `[P_n, H] = 0`. Projectors on a sub-layout of
/// `h`'s space are lifted first.
pub fn commutes(projectors: &[Observable], h: &Observable, tol: f64) -> Result<CommutationReport, EinselectionError> {
    let mut norms = Vec::with_capacity(projectors.len());
    for p in projectors {
        check_projector(p)?;
        let lifted = on_layout(p, h.layout())?;
        norms.push(linalg::frobenius(&linalg::commutator(lifted.matrix(), h.matrix())));
    }
    let pass = norms.iter().all(|&n| n < tol);
    Ok(CommutationReport { norms, tol, pass })
}

/// `Ô = Σ λ_n P_n` for an orthogonal, complete projector family.
pub fn preferred_observable(projectors: &[Observable], eigenvalues: &[f64]) -> Result<Observable, EinselectionError> {
    let first = projectors
        .first()
        .ok_or_else(|| EinselectionError::IncompleteFamily("empty family".into()))?;
    if projectors.len() != eigenvalues.len() {
        return Err(EinselectionError::InvalidProjector(format!(
            "{} projectors but {} eigenvalues",
            projectors.len(),
            eigenvalues.len()
        )));
    }
    let layout = first.layout().clone();
    let d = layout.dim();
    let mut sum = CMatrix::zeros(d, d);
    let mut obs = CMatrix::zeros(d, d);
    for (i, p) in projectors.iter().enumerate() {
        if p.layout() != &layout {
            return Err(HilbertError::LayoutMismatch(format!("projector {i} on `{}`", p.layout())).into());
        }
        check_projector(p)?;
        for q in &projectors[i + 1..] {
            let overlap = linalg::frobenius(&(p.matrix() * q.matrix()));
            if overlap > PROJECTOR_TOL {
                return Err(EinselectionError::IncompleteFamily(format!(
                    "projectors are not mutually orthogonal ({overlap:e})"
                )));
            }
        }
        sum += p.matrix();
        obs += p.matrix().map(|z| z * eigenvalues[i]);
    }
    let gap = linalg::max_abs_diff(&sum, &CMatrix::identity(d, d));
    if gap > PROJECTOR_TOL {
        return Err(EinselectionError::IncompleteFamily(format!("Σ P_n ≠ I (residual {gap:e})")));
    }
    Ok(Observable::new(layout, (&obs + obs.adjoint()).scale(0.5))?)
}

#[derive(Debug, Clone)]
pub struct SieveEntry {
    /// Position in the candidate list.
    pub index: usize,
    pub candidate: PureState,
    pub purity: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SieveReport {
    pub time: f64,
    /// Ranked: purity descending, then entropy ascending, then candidate index.
    pub entries: Vec<SieveEntry>,
}

impl SieveReport {
    /// Rank (0 = best) of candidate `index`.
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.index == index)
    }
}

/// Scores below this resolution count as ties.
const SCORE_GRID: f64 = 1e-12;

fn grid_key(x: f64) -> i64 {
    (x / SCORE_GRID).round() as i64
}

pub fn predictability_sieve(
    spec: &InteractionSpec,
    env: &Environment,
    candidates: &[PureState],
    t: f64,
) -> Result<SieveReport, EinselectionError> {
    check_environment(spec, env)?;
    let sys = spec.system_layout();
    let u = Propagator::new(&spec.total(), t);
    let mut entries = Vec::with_capacity(candidates.len());
    for (index, c) in candidates.iter().enumerate() {
        if c.layout() != &sys {
            return Err(HilbertError::LayoutMismatch(format!(
                "candidate {index} on `{}`, system is `{sys}`",
                c.layout()
            ))
            .into());
        }
        let rho = evolve_reduced(spec, &u, c, env)?;
        entries.push(SieveEntry {
            index,
            candidate: c.clone(),
            purity: hilbert::purity(&rho).min(1.0),
            entropy: hilbert::vn_entropy(&rho).max(0.0),
        });
    }
    entries.sort_by_key(|e| (-grid_key(e.purity), grid_key(e.entropy), e.index));
    Ok(SieveReport { time: t, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Pointer states are close to eigenstates of the interaction.
    InteractionDominated,
    /// Pointer states are close to energy eigenstates of the system.
    SelfDominated,
    Intermediate,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::InteractionDominated => "interaction_dominated",
            Regime::SelfDominated => "self_dominated",
            Regime::Intermediate => "intermediate",
        }
    }
}

pub const DEFAULT_REGIME_THRESHOLDS: (f64, f64) = (0.1, 10.0);

/// Classifies by `‖h_int‖ / ‖h_self‖`: at or above `high` is interaction
/// dominated, at or below `low` self dominated.
pub fn classify_regime(spec: &InteractionSpec, (low, high): (f64, f64)) -> Result<Regime, EinselectionError> {
    if !(low > 0.0 && low < high && high.is_finite()) {
        return Err(EinselectionError::InvalidThresholds(low, high));
    }
    let n_int = spec.h_int.operator_norm();
    let n_self = spec.h_self.operator_norm();
    if n_int == 0.0 && n_self == 0.0 {
        return Err(EinselectionError::DegenerateSpec);
    }
    if n_self == 0.0 {
        return Ok(Regime::InteractionDominated);
    }
    let ratio = n_int / n_self;
    Ok(if ratio >= high {
        Regime::InteractionDominated
    } else if ratio <= low {
        Regime::SelfDominated
    } else {
        Regime::Intermediate
    })
}

/// Eigenpairs of `[[1/2+δ, ω*], [ω, 1/2−δ]]`, eigenvalues descending.
///
/// The matrix is a density operator when `|ω| ≤ 1/2 + δ`; outside that
/// region the eigenpairs are still returned.
pub fn near_degenerate_eigenvectors(delta: f64, omega: C64) -> [(f64, CVector); 2] {
    let r = delta.hypot(omega.norm());
    let hi = 0.5 + r;
    // 1 − hi is exact for hi in [0.5, 2], so the pair sums to exactly 1
    let lo = 1.0 - hi;
    if r == 0.0 {
        let e = |i: usize| CVector::from_fn(2, |k, _| C64::new(if k == i { 1.0 } else { 0.0 }, 0.0));
        return [(hi, e(0)), (lo, e(1))];
    }
    // pick the algebraically equivalent form that avoids cancellation
    let v = if delta >= 0.0 {
        CVector::from_vec(vec![C64::new(r + delta, 0.0), omega])
    } else {
        CVector::from_vec(vec![omega.conj(), C64::new(r - delta, 0.0)])
    };
    let v = v.unscale(v.norm());
    let w = CVector::from_vec(vec![-v[1].conj(), v[0].conj()]);
    [(hi, v), (lo, w)]
}

#[derive(Debug, Clone)]
pub struct SchmidtPointerSample {
    pub time: f64,
    /// Eigenvalues of the reduced system state, descending.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors (the system-side Schmidt basis).
    pub schmidt_basis: Vec<CVector>,
    /// For each Schmidt vector, the angle to the closest pointer ray.
    pub angles: Vec<f64>,
    /// Index of that closest pointer candidate.
    pub nearest_pointer: Vec<usize>,
    /// Some eigenvalue gap is below the degeneracy threshold.
    pub near_degenerate: bool,
    /// The reduced state is rank deficient, so part of the basis is arbitrary.
    pub rank_deficient: bool,
}

impl SchmidtPointerSample {
    pub fn max_angle(&self) -> f64 {
        self.angles.iter().copied().fold(0.0, f64::max)
    }
}

pub const NEAR_DEGENERATE_GAP: f64 = 1e-6;
const RANK_FLOOR: f64 = 1e-12;

/// Instantaneous Schmidt basis versus pointer candidates at `{0, t/2, t}`.
pub fn schmidt_vs_pointer(
    spec: &InteractionSpec,
    env: &Environment,
    initial: &PureState,
    t: f64,
    pointers: &[PureState],
) -> Result<Vec<SchmidtPointerSample>, EinselectionError> {
    check_environment(spec, env)?;
    let sys = spec.system_layout();
    for p in pointers.iter().chain(std::iter::once(initial)) {
        if p.layout() != &sys {
            return Err(HilbertError::LayoutMismatch(format!("state on `{}`, system is `{sys}`", p.layout())).into());
        }
    }
    let h = spec.total();
    [0.0, 0.5 * t, t]
        .into_iter()
        .map(|time| {
            let rho = evolve_reduced(spec, &Propagator::new(&h, time), initial, env)?;
            let (values, vectors) = linalg::hermitian_eigen(rho.matrix());
            let basis: Vec<CVector> = vectors.column_iter().map(|c| c.into_owned()).collect();
            let mut angles = Vec::with_capacity(basis.len());
            let mut nearest = Vec::with_capacity(basis.len());
            for v in &basis {
                let (k, a) = pointers
                    .iter()
                    .map(|p| linalg::ray_angle(v, p.amplitudes()))
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((usize::MAX, std::f64::consts::FRAC_PI_2));
                angles.push(a);
                nearest.push(k);
            }
            Ok(SchmidtPointerSample {
                time,
                near_degenerate: values.windows(2).any(|w| w[0] - w[1] < NEAR_DEGENERATE_GAP),
                rank_deficient: values.iter().any(|&v| v < RANK_FLOOR),
                eigenvalues: values,
                schmidt_basis: basis,
                angles,
                nearest_pointer: nearest,
            })
        })
        .collect()
}

/// `|↑⟩, |↓⟩, |+⟩, |−⟩` on the spin-bath system factor.
pub fn spin_candidates() -> Vec<PureState> {
    let l = SpaceLayout::single("S", 2).expect("valid label");
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mk = |a: f64, b: f64| PureState::from_slice(l.clone(), &[C64::new(a, 0.0), C64::new(b, 0.0)]).expect("unit");
    vec![mk(1.0, 0.0), mk(0.0, 1.0), mk(h, h), mk(h, -h)]
}
