//! Consistent histories: projector families, the decoherence functional in
//! both pictures, consistency conditions, coarse-graining and Schmidt
//! projectors built from path-projected reduced states.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::hilbert::{self, DensityOperator, HilbertError, Observable, Propagator, PureState, SpaceLayout};
use crate::linalg::{self, CMatrix};
use crate::C64;

pub const MAX_TIMES: usize = 4;
pub const MAX_PROJECTORS: usize = 8;
pub const FAMILY_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are merged into one Schmidt projector.
pub const DEGENERACY_GAP: f64 = 1e-8;
pub const COMMUTATOR_TOL: f64 = 1e-8;
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HistoriesError {
    #[error("invalid projector family: {0}")]
    InvalidFamily(String),
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),
    #[error("history set too large: {0}")]
    TooLarge(String),
    #[error("history {0:?} not in the functional")]
    NotFound(Vec<usize>),
    #[error("bad grouping: {0}")]
    BadGrouping(String),
    #[error("Schmidt projector fails commutation check ({0:e})")]
    CommutatorCheck(f64),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Projectors `{P_α}` attached to one time.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    time: f64,
    projectors: Vec<Observable>,
}

#[derive(Debug, Clone)]
pub struct FamilyDiagnostics {
    /// `max |Σ P_α − I|`.
    pub completeness: f64,
    /// `max |P_α² − P_α|` over the family.
    pub idempotency: f64,
    /// `((α, β), max |P_α P_β|)` for `α < β`.
    pub orthogonality: Vec<((usize, usize), f64)>,
}

impl FamilyDiagnostics {
    pub fn max_orthogonality(&self) -> f64 {
        self.orthogonality.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.completeness <= tol && self.idempotency <= tol && self.max_orthogonality() <= tol
    }
}

impl ProjectorFamily {
    /// Checked family: complete and orthogonal within 1e-10.
    pub fn new(time: f64, projectors: Vec<Observable>) -> Result<Self, HistoriesError> {
        let f = Self::unchecked(time, projectors)?;
        let d = validate_family(&f);
        if !d.passes(FAMILY_TOL) {
            return Err(HistoriesError::InvalidFamily(format!(
                "completeness {:e}, idempotency {:e}, orthogonality {:e}",
                d.completeness,
                d.idempotency,
                d.max_orthogonality()
            )));
        }
        Ok(f)
    }

    /// Family that is only required to share one layout; see [`validate_family`].
    pub fn unchecked(time: f64, projectors: Vec<Observable>) -> Result<Self, HistoriesError> {
        let first = projectors
            .first()
            .ok_or_else(|| HistoriesError::InvalidFamily("empty family".into()))?;
        if projectors.len() > MAX_PROJECTORS {
            return Err(HistoriesError::TooLarge(format!("{} projectors > {MAX_PROJECTORS}", projectors.len())));
        }
        if !time.is_finite() {
            return Err(HistoriesError::InvalidFamily("time must be finite".into()));
        }
        let layout = first.layout().clone();
        if projectors.iter().any(|p| p.layout() != &layout) {
            return Err(HistoriesError::InvalidFamily("projectors on different layouts".into()));
        }
        Ok(Self { time, projectors })
    }

    /// Projectors onto each standard basis state of `layout`.
    pub fn computational(time: f64, layout: &SpaceLayout) -> Result<Self, HistoriesError> {
        let ps = (0..layout.dim())
            .map(|i| Ok(Observable::projector(&PureState::basis(layout.clone(), i)?)))
            .collect::<Result<Vec<_>, HilbertError>>()?;
        Self::new(time, ps)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn projectors(&self) -> &[Observable] {
        &self.projectors
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.projectors[0].layout()
    }

    fn lifted(&self, full: &SpaceLayout) -> Result<Self, HistoriesError> {
        if self.layout() == full {
            return Ok(self.clone());
        }
        let projectors = self.projectors.iter().map(|p| p.lift(full)).collect::<Result<_, _>>()?;
        Ok(Self { time: self.time, projectors })
    }
}

pub fn validate_family(family: &ProjectorFamily) -> FamilyDiagnostics {
    let d = family.layout().dim();
    let mut sum = CMatrix::zeros(d, d);
    let mut idempotency = 0.0f64;
    for p in &family.projectors {
        let m = p.matrix();
        sum += m;
        idempotency = idempotency.max(linalg::max_abs_diff(&(m * m), m));
    }
    let completeness = linalg::max_abs_diff(&sum, &CMatrix::identity(d, d));
    let mut orthogonality = Vec::new();
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            let prod = family.projectors[i].matrix() * family.projectors[j].matrix();
            let r = prod.iter().map(|z| z.norm()).fold(0.0, f64::max);
            orthogonality.push(((i, j), r));
        }
    }
    FamilyDiagnostics { completeness, idempotency, orthogonality }
}

/// Which family applies at each time.
#[derive(Debug, Clone)]
pub enum FamilyAssignment {
    /// One family per time.
    Fixed(Vec<ProjectorFamily>),
    /// Family at time `i` keyed by the `i` earlier projector choices.
    Branching(BTreeMap<Vec<usize>, ProjectorFamily>),
}

/// Time-ordered projector choices `α = (α_1, …, α_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    pub choices: Vec<usize>,
    pub branch_dependent: bool,
}

/// Families on a strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct HistorySpace {
    layout: SpaceLayout,
    times: Vec<f64>,
    families: FamilyAssignment,
}

impl HistorySpace {
    pub fn fixed(families: Vec<ProjectorFamily>) -> Result<Self, HistoriesError> {
        let times: Vec<f64> = families.iter().map(|f| f.time).collect();
        let layout = families
            .first()
            .ok_or_else(|| HistoriesError::GridMismatch("no times".into()))?
            .layout()
            .clone();
        let s = Self { layout, times, families: FamilyAssignment::Fixed(families) };
        s.check()?;
        Ok(s)
    }

    pub fn branching(times: Vec<f64>, families: BTreeMap<Vec<usize>, ProjectorFamily>) -> Result<Self, HistoriesError> {
        let layout = families
            .get(&Vec::new())
            .ok_or_else(|| HistoriesError::GridMismatch("no family for the first time".into()))?
            .layout()
            .clone();
        let s = Self { layout, times, families: FamilyAssignment::Branching(families) };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), HistoriesError> {
        if self.times.is_empty() || self.times.len() > MAX_TIMES {
            return Err(HistoriesError::TooLarge(format!("{} times, allowed 1..={MAX_TIMES}", self.times.len())));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HistoriesError::GridMismatch("times must be strictly increasing".into()));
        }
        // walk every reachable prefix
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for (i, &t) in self.times.iter().enumerate() {
            let mut next = Vec::new();
            for prefix in &frontier {
                let f = self.family(prefix).ok_or_else(|| {
                    HistoriesError::GridMismatch(format!("no family for prefix {prefix:?} at time index {i}"))
                })?;
                if f.time != t {
                    return Err(HistoriesError::GridMismatch(format!(
                        "family for prefix {prefix:?} has time {}, grid has {t}",
                        f.time
                    )));
                }
                if f.layout() != &self.layout {
                    return Err(HistoriesError::GridMismatch(format!("family for prefix {prefix:?} on `{}`", f.layout())));
                }
                let d = validate_family(f);
                if !d.passes(FAMILY_TOL) {
                    return Err(HistoriesError::InvalidFamily(format!("prefix {prefix:?} fails validation")));
                }
                for a in 0..f.len() {
                    let mut p = prefix.clone();
                    p.push(a);
                    next.push(p);
                }
            }
            frontier = next;
        }
        Ok(())
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn is_branch_dependent(&self) -> bool {
        matches!(self.families, FamilyAssignment::Branching(_))
    }

    /// Family at time index `prefix.len()` after the choices in `prefix`.
    pub fn family(&self, prefix: &[usize]) -> Option<&ProjectorFamily> {
        match &self.families {
            FamilyAssignment::Fixed(f) => f.get(prefix.len()),
            FamilyAssignment::Branching(m) => m.get(prefix),
        }
    }

    /// Every fine-grained history, lexicographic in the choices.
    pub fn histories(&self) -> Vec<History> {
        let bd = self.is_branch_dependent();
        let mut out = vec![Vec::new()];
        for _ in 0..self.times.len() {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    let n = self.family(&p).map_or(0, ProjectorFamily::len);
                    (0..n).map(move |a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        out.into_iter().map(|choices| History { choices, branch_dependent: bd }).collect()
    }

    fn projector(&self, h: &History, i: usize) -> &CMatrix {
        self.family(&h.choices[..i]).expect("checked").projectors[h.choices[i]].matrix()
    }

    /// The same families acting as `P ⊗ I` on a larger space.
    pub fn lifted(&self, full: &SpaceLayout) -> Result<Self, HistoriesError> {
        let families = match &self.families {
            FamilyAssignment::Fixed(f) => FamilyAssignment::Fixed(f.iter().map(|x| x.lifted(full)).collect::<Result<_, _>>()?),
            FamilyAssignment::Branching(m) => FamilyAssignment::Branching(
                m.iter().map(|(k, v)| Ok((k.clone(), v.lifted(full)?))).collect::<Result<_, HistoriesError>>()?,
            ),
        };
        Ok(Self { layout: full.clone(), times: self.times.clone(), families })
    }
}

/// `U(t_{i−1}, t_i)` for `t_{−1} = t0` and each grid time.
pub fn propagators_from_hamiltonian(h: &Observable, t0: f64, times: &[f64]) -> Vec<Propagator> {
    let mut prev = t0;
    times
        .iter()
        .map(|&t| {
            let u = Propagator::new(h, t - prev);
            prev = t;
            u
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    Schrodinger,
    Heisenberg,
}

/// `D(α, β)` over every fine-grained history of a space.
#[derive(Debug, Clone)]
pub struct DecoherenceFunctional {
    pub histories: Vec<History>,
    pub values: CMatrix,
}

impl DecoherenceFunctional {
    pub fn index_of(&self, choices: &[usize]) -> Option<usize> {
        self.histories.binary_search_by(|h| h.choices.as_slice().cmp(choices)).ok()
    }

    pub fn value(&self, alpha: &[usize], beta: &[usize]) -> Result<C64, HistoriesError> {
        let a = self.index_of(alpha).ok_or_else(|| HistoriesError::NotFound(alpha.to_vec()))?;
        let b = self.index_of(beta).ok_or_else(|| HistoriesError::NotFound(beta.to_vec()))?;
        Ok(self.values[(a, b)])
    }

    /// Sum of every entry; 1 for a complete fine-grained set.
    pub fn total(&self) -> C64 {
        self.values.iter().sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.values)
    }
}

fn check_inputs(space: &HistorySpace, rho0: &DensityOperator, propagators: &[Propagator]) -> Result<(), HistoriesError> {
    if rho0.layout() != space.layout() {
        return Err(HistoriesError::GridMismatch(format!(
            "initial state on `{}`, families on `{}`",
            rho0.layout(),
            space.layout()
        )));
    }
    if propagators.len() != space.times.len() {
        return Err(HistoriesError::GridMismatch(format!(
            "{} propagators for {} times",
            propagators.len(),
            space.times.len()
        )));
    }
    if let Some(p) = propagators.iter().find(|p| p.layout() != space.layout()) {
        return Err(HistoriesError::GridMismatch(format!("propagator on `{}`", p.layout())));
    }
    Ok(())
}

/// `D(α, β) = Tr[C_α ρ0 C_β†]` with `C_α = P_{α_n} U_n ⋯ P_{α_1} U_1` in the
/// Schrödinger picture or `C_α = P_{α_n}(t_n) ⋯ P_{α_1}(t_1)` with
/// `P(t_i) = V_i† P V_i` in the Heisenberg picture.
pub fn decoherence_functional(
    space: &HistorySpace,
    rho0: &DensityOperator,
    propagators: &[Propagator],
    picture: Picture,
) -> Result<DecoherenceFunctional, HistoriesError> {
    check_inputs(space, rho0, propagators)?;
    let histories = space.histories();
    let d = space.layout().dim();
    // cumulative V_i = U_i ⋯ U_1
    let mut cumulative = Vec::with_capacity(propagators.len());
    let mut v = CMatrix::identity(d, d);
    for u in propagators {
        v = u.matrix() * v;
        cumulative.push(v.clone());
    }
    // ρ0 = S S†, so D(α, β) = Σ_ij (C_α S)_ij conj((C_β S)_ij)
    let s = linalg::hermitian_function(rho0.matrix(), |x| C64::new(x.max(0.0).sqrt(), 0.0));
    let mut w = CMatrix::zeros(d * d, histories.len());
    for (col, h) in histories.iter().enumerate() {
        let mut c = CMatrix::identity(d, d);
        for i in 0..space.times.len() {
            let p = space.projector(h, i);
            c = match picture {
                Picture::Schrodinger => p * propagators[i].matrix() * c,
                Picture::Heisenberg => cumulative[i].adjoint() * p * &cumulative[i] * c,
            };
        }
        let cs = c * &s;
        w.column_mut(col).copy_from_slice(cs.as_slice());
    }
    let values = w.transpose() * w.conjugate();
    Ok(DecoherenceFunctional { histories, values })
}

/// `p(α) = D(α, α)`.
pub fn probability(choices: &[usize], functional: &DecoherenceFunctional) -> Result<f64, HistoriesError> {
    Ok(functional.value(choices, choices)?.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyMode {
    /// `Re D(α, β) = 0` for `α ≠ β`.
    Weak,
    /// `D(α, β) = 0` for `α ≠ β`.
    Medium,
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub mode: ConsistencyMode,
    pub max_violation: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_consistency(functional: &DecoherenceFunctional, mode: ConsistencyMode, tol: f64) -> ConsistencyReport {
    let n = functional.histories.len();
    let mut max_violation = 0.0f64;
    let mut worst_pair = None;
    for a in 0..n {
        for b in a + 1..n {
            let z = functional.values[(a, b)];
            let v = match mode {
                ConsistencyMode::Weak => z.re.abs(),
                ConsistencyMode::Medium => z.norm(),
            };
            if v > max_violation {
                max_violation = v;
                worst_pair = Some((a, b));
            }
        }
    }
    ConsistencyReport { mode, max_violation, worst_pair, tol, pass: max_violation <= tol }
}

#[derive(Debug, Clone)]
pub struct CoarseGrained {
    /// Per time, the projector indices combined into one event.
    pub selection: Vec<Vec<usize>>,
    /// Indices into the functional's history list.
    pub members: Vec<usize>,
    /// `Σ_{α,β ∈ members} D(α, β)`.
    pub probability: f64,
    /// `Σ_{α ∈ members} D(α, α)`.
    pub member_sum: f64,
    /// `probability − member_sum = 2 Σ_{α<β} Re D(α, β)`.
    pub violation: f64,
}

/// Combines the histories whose choice at each time lies in `selection[i]`.
pub fn coarse_grain(functional: &DecoherenceFunctional, selection: &[Vec<usize>]) -> Result<CoarseGrained, HistoriesError> {
    let n_times = functional.histories.first().map_or(0, |h| h.choices.len());
    if selection.len() != n_times {
        return Err(HistoriesError::BadGrouping(format!("{} selections for {n_times} times", selection.len())));
    }
    for (i, s) in selection.iter().enumerate() {
        if s.is_empty() {
            return Err(HistoriesError::BadGrouping(format!("empty selection at time index {i}")));
        }
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != s.len() {
            return Err(HistoriesError::BadGrouping(format!("repeated index at time index {i}")));
        }
        let max_index = functional.histories.iter().map(|h| h.choices[i]).max().unwrap_or(0);
        if let Some(bad) = s.iter().find(|&&a| a > max_index) {
            return Err(HistoriesError::BadGrouping(format!("index {bad} out of range at time index {i}")));
        }
    }
    let members: Vec<usize> = functional
        .histories
        .iter()
        .enumerate()
        .filter(|(_, h)| h.choices.iter().zip(selection).all(|(a, s)| s.contains(a)))
        .map(|(k, _)| k)
        .collect();
    let mut probability = 0.0;
    let mut member_sum = 0.0;
    let mut cross = 0.0;
    for (x, &a) in members.iter().enumerate() {
        member_sum += functional.values[(a, a)].re;
        for &b in &members[x + 1..] {
            cross += functional.values[(a, b)].re;
        }
    }
    probability += member_sum + 2.0 * cross;
    Ok(CoarseGrained { selection: selection.to_vec(), members, probability, member_sum, violation: 2.0 * cross })
}

/// Coarse-grains along a partition of every family's indices; returns one
/// result per combination of groups.
pub fn coarse_grain_partition(
    functional: &DecoherenceFunctional,
    space: &HistorySpace,
    partition: &[Vec<Vec<usize>>],
) -> Result<Vec<CoarseGrained>, HistoriesError> {
    let FamilyAssignment::Fixed(families) = &space.families else {
        return Err(HistoriesError::BadGrouping("partitions need fixed families".into()));
    };
    if partition.len() != families.len() {
        return Err(HistoriesError::BadGrouping(format!("{} partitions for {} times", partition.len(), families.len())));
    }
    for (i, (groups, f)) in partition.iter().zip(families).enumerate() {
        let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
        all.sort_unstable();
        if all != (0..f.len()).collect::<Vec<_>>() || groups.iter().any(Vec::is_empty) {
            return Err(HistoriesError::BadGrouping(format!("groups at time index {i} do not partition 0..{}", f.len())));
        }
    }
    let mut combos: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for groups in partition {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                groups.iter().map(move |g| {
                    let mut c = c.clone();
                    c.push(g.clone());
                    c
                })
            })
            .collect();
    }
    combos.iter().map(|sel| coarse_grain(functional, sel)).collect()
}

/// Schmidt projectors for one branch at one time.
#[derive(Debug, Clone)]
pub struct SchmidtNode {
    pub family: ProjectorFamily,
    /// Eigenvalue of the path-projected reduced state for each projector.
    pub eigenvalues: Vec<f64>,
    /// Trace of the path-projected state reaching this node.
    pub weight: f64,
    /// Some projector merged eigenvalues closer than the degeneracy gap.
    pub degenerate: bool,
    pub commutator_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SchmidtHistories {
    pub system: Vec<String>,
    pub times: Vec<f64>,
    /// Keyed by the choices made at earlier times.
    pub nodes: BTreeMap<Vec<usize>, SchmidtNode>,
}

impl SchmidtHistories {
    pub fn space(&self) -> Result<HistorySpace, HistoriesError> {
        let fams = self.nodes.iter().map(|(k, v)| (k.clone(), v.family.clone())).collect();
        HistorySpace::branching(self.times.clone(), fams)
    }

    /// The node chain obtained by always following the heaviest projector.
    pub fn dominant_path(&self) -> Vec<(&Vec<usize>, &SchmidtNode)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        while let Some((k, node)) = self.nodes.get_key_value(&prefix) {
            out.push((k, node));
            let best = node
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("non-empty family");
            prefix.push(best);
        }
        out
    }
}

/// Eigenprojectors of the evolved, path-projected reduced state at each grid
/// time, recursively for every branch.
pub fn schmidt_history_projectors<S: AsRef<str>>(
    rho0: &DensityOperator,
    system: &[S],
    propagators: &[Propagator],
    times: &[f64],
) -> Result<SchmidtHistories, HistoriesError> {
    if propagators.len() != times.len() {
        return Err(HistoriesError::GridMismatch(format!("{} propagators for {} times", propagators.len(), times.len())));
    }
    if times.is_empty() || times.len() > MAX_TIMES {
        return Err(HistoriesError::TooLarge(format!("{} times", times.len())));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HistoriesError::GridMismatch("times must be strictly increasing".into()));
    }
    let layout = rho0.layout().clone();
    if let Some(p) = propagators.iter().find(|p| p.layout() != &layout) {
        return Err(HistoriesError::GridMismatch(format!("propagator on `{}`", p.layout())));
    }
    let sys_pos = layout.positions_of(system)?;
    let sys_layout = layout.sublayout(&sys_pos);
    let sys_labels: Vec<String> = sys_layout.labels().map(str::to_string).collect();
    let mut nodes = BTreeMap::new();
    // (prefix, unnormalized full state before propagation to the next time)
    let mut frontier: Vec<(Vec<usize>, CMatrix)> = vec![(Vec::new(), rho0.matrix().clone())];
    for (i, u) in propagators.iter().enumerate() {
        let mut next = Vec::new();
        for (prefix, m) in frontier {
            let evolved = u.matrix() * m * u.matrix().adjoint();
            let weight = linalg::trace(&evolved).re;
            let full = DensityOperator::from_parts_unchecked(layout.clone(), evolved.clone());
            let reduced = hilbert::partial_trace(&full, &sys_labels)?;
            let mut normalized = reduced.matrix().clone();
            if weight > 1e-300 {
                normalized.unscale_mut(weight);
            }
            let eigen = linalg::hermitian_eigen(&normalized).0;
            let groups = linalg::group_by_gap(&eigen, DEGENERACY_GAP);
            let degenerate = groups.iter().any(|g| g.len() > 1);
            let spectral = linalg::spectral_projectors(&normalized, DEGENERACY_GAP);
            let mut commutator_residual = 0.0f64;
            let mut projectors = Vec::with_capacity(spectral.len());
            let mut eigenvalues = Vec::with_capacity(spectral.len());
            for (lam, p) in spectral {
                commutator_residual = commutator_residual.max(linalg::frobenius(&linalg::commutator(&p, &normalized)));
                eigenvalues.push(lam);
                projectors.push(Observable::new(sys_layout.clone(), p)?);
            }
            if commutator_residual > COMMUTATOR_TOL {
                return Err(HistoriesError::CommutatorCheck(commutator_residual));
            }
            let family = ProjectorFamily::new(times[i], projectors)?;
            for (a, p) in family.projectors().iter().enumerate() {
                let lifted = hilbert::lift_matrix(&sys_layout, p.matrix(), &layout)?;
                let mut q = prefix.clone();
                q.push(a);
                next.push((q, &lifted * &evolved * &lifted));
            }
            nodes.insert(prefix, SchmidtNode { family, eigenvalues, weight, degenerate, commutator_residual });
        }
        frontier = next;
    }
    Ok(SchmidtHistories { system: sys_labels, times: times.to_vec(), nodes })
}

/// Symmetrized Hausdorff distance (Frobenius) between two projector sets.
pub fn family_distance(a: &ProjectorFamily, b: &ProjectorFamily) -> f64 {
    let one_way = |x: &ProjectorFamily, y: &ProjectorFamily| {
        x.projectors
            .iter()
            .map(|p| {
                y.projectors
                    .iter()
                    .map(|q| linalg::frobenius(&(p.matrix() - q.matrix())))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[derive(Debug, Clone)]
pub struct Instability {
    pub deleted_index: usize,
    /// Family distance along the dominant path at each remaining later time.
    pub distances: Vec<(f64, f64)>,
    pub max_distance: f64,
}

/// Deletes grid point `k` (merging its two propagators) and compares the
/// Schmidt families along the dominant path at every later time.
pub fn schmidt_instability<S: AsRef<str>>(
    rho0: &DensityOperator,
    system: &[S],
    propagators: &[Propagator],
    times: &[f64],
    k: usize,
) -> Result<Instability, HistoriesError> {
    if k >= times.len() || times.len() < 2 {
        return Err(HistoriesError::GridMismatch(format!("cannot delete index {k} of {} times", times.len())));
    }
    let full = schmidt_history_projectors(rho0, system, propagators, times)?;
    let mut props: Vec<Propagator> = Vec::with_capacity(times.len() - 1);
    let mut ts = Vec::with_capacity(times.len() - 1);
    for i in 0..times.len() {
        if i == k {
            continue;
        }
        if i == k + 1 {
            props.push(propagators[i].then_after(&propagators[k])?);
        } else {
            props.push(propagators[i].clone());
        }
        ts.push(times[i]);
    }
    let reduced = schmidt_history_projectors(rho0, system, &props, &ts)?;
    let a = full.dominant_path();
    let b = reduced.dominant_path();
    let mut distances = Vec::new();
    for (node_b, &t) in b.iter().zip(&ts) {
        if t <= times[k] {
            continue;
        }
        let node_a = a.iter().find(|(_, n)| n.family.time == t).expect("time on both grids");
        distances.push((t, family_distance(&node_a.1.family, &node_b.1.family)));
    }
    let max_distance = distances.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(Instability { deleted_index: k, distances, max_distance })
}

#[derive(Debug, Clone)]
pub struct ReducedComparison {
    pub full: DecoherenceFunctional,
    pub reduced: DecoherenceFunctional,
    pub max_discrepancy: f64,
}

/// Functional of system-only families evaluated from the full state and from
/// a reduced evolution that re-embeds `X ⊗ ρ_E(t)` between projections,
/// discarding system-environment correlations.
pub fn reduced_functional_comparison(
    space: &HistorySpace,
    rho0: &DensityOperator,
    propagators: &[Propagator],
) -> Result<ReducedComparison, HistoriesError> {
    let full_layout = rho0.layout().clone();
    let lifted = space.lifted(&full_layout)?;
    let full = decoherence_functional(&lifted, rho0, propagators, Picture::Schrodinger)?;
    let sys_labels: Vec<&str> = space.layout().labels().collect();
    let sys_pos = full_layout.positions_of(&sys_labels)?;
    let env_pos = full_layout.complement(&sys_pos);
    if env_pos.is_empty() {
        return Err(HistoriesError::GridMismatch("no environment factors".into()));
    }
    let env_layout = full_layout.sublayout(&env_pos);
    let env_labels: Vec<&str> = env_layout.labels().collect();
    let sys_layout = space.layout().clone();
    // environment marginals of the unprojected evolution before each step
    let mut env_states = Vec::with_capacity(propagators.len());
    let mut rho = rho0.clone();
    for u in propagators {
        env_states.push(hilbert::partial_trace(&rho, &env_labels)?);
        rho = u.apply_density(&rho)?;
    }
    let rho_s0 = hilbert::partial_trace(rho0, &sys_labels)?;
    let histories = full.histories.clone();
    let n = histories.len();
    let mut values = CMatrix::zeros(n, n);
    let joint_sys_first = sys_layout.join(&env_layout)?;
    for a in 0..n {
        for b in a..n {
            let mut x = rho_s0.matrix().clone();
            for (i, u) in propagators.iter().enumerate() {
                let embedded = x.kronecker(env_states[i].matrix());
                let embedded = DensityOperator::from_parts_unchecked(joint_sys_first.clone(), embedded)
                    .reorder(&full_layout)?
                    .into_matrix();
                let evolved = u.matrix() * embedded * u.matrix().adjoint();
                let traced = partial_trace_matrix(&full_layout, &evolved, &sys_labels)?;
                x = space.projector(&histories[a], i) * traced * space.projector(&histories[b], i);
            }
            let v = linalg::trace(&x);
            values[(a, b)] = v;
            values[(b, a)] = v.conj();
        }
    }
    let reduced = DecoherenceFunctional { histories, values };
    let max_discrepancy = linalg::max_abs_diff(&full.values, &reduced.values);
    Ok(ReducedComparison { full, reduced, max_discrepancy })
}

/// Partial trace of a possibly non-Hermitian operator.
fn partial_trace_matrix(layout: &SpaceLayout, m: &CMatrix, keep: &[&str]) -> Result<CMatrix, HistoriesError> {
    // split into Hermitian and anti-Hermitian parts, both traced linearly
    let h = (m + m.adjoint()).scale(0.5);
    let k = (m - m.adjoint()) * C64::new(0.0, -0.5);
    let th = hilbert::partial_trace(&DensityOperator::from_parts_unchecked(layout.clone(), h), keep)?;
    let tk = hilbert::partial_trace(&DensityOperator::from_parts_unchecked(layout.clone(), k), keep)?;
    Ok(th.matrix() + tk.matrix() * C64::new(0.0, 1.0))
}

/// TOML description of a histories problem; matrix files are in the textual
/// format and resolved relative to the manifest.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HistoriesManifest {
    pub initial_pure: Option<String>,
    pub initial_density: Option<String>,
    pub hamiltonian: String,
    #[serde(default)]
    pub t0: f64,
    pub times: Vec<f64>,
    /// Projector files per time.
    pub families: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct HistoriesProblem {
    pub space: HistorySpace,
    pub rho0: DensityOperator,
    pub propagators: Vec<Propagator>,
}

impl HistoriesManifest {
    pub fn parse(text: &str) -> Result<Self, HistoriesError> {
        let m: Self = toml::from_str(text).map_err(|e| HistoriesError::Manifest(e.to_string()))?;
        if m.initial_pure.is_some() == m.initial_density.is_some() {
            return Err(HistoriesError::Manifest("give exactly one of initial_pure, initial_density".into()));
        }
        if m.times.len() != m.families.len() {
            return Err(HistoriesError::Manifest(format!("{} times but {} families", m.times.len(), m.families.len())));
        }
        if m.times.is_empty() || m.times.len() > MAX_TIMES {
            return Err(HistoriesError::TooLarge(format!("{} times", m.times.len())));
        }
        if !m.t0.is_finite() || m.times.iter().any(|t| !t.is_finite()) {
            return Err(HistoriesError::Manifest("times must be finite".into()));
        }
        if m.times.first().is_some_and(|&t| t < m.t0) {
            return Err(HistoriesError::GridMismatch("first time precedes t0".into()));
        }
        if m.families.iter().any(|f| f.is_empty() || f.len() > MAX_PROJECTORS) {
            return Err(HistoriesError::TooLarge(format!("families need 1..={MAX_PROJECTORS} projectors")));
        }
        Ok(m)
    }

    pub fn resolve<F>(&self, mut read: F) -> Result<HistoriesProblem, HistoriesError>
    where
        F: FnMut(&str) -> Result<String, HistoriesError>,
    {
        let rho0 = match (&self.initial_pure, &self.initial_density) {
            (Some(p), _) => PureState::from_text(&read(p)?)?.density(),
            (_, Some(d)) => DensityOperator::from_text(&read(d)?)?,
            _ => unreachable!("checked in parse"),
        };
        let h = Observable::from_text(&read(&self.hamiltonian)?)?;
        let mut families = Vec::with_capacity(self.families.len());
        for (files, &t) in self.families.iter().zip(&self.times) {
            let ps = files
                .iter()
                .map(|f| Ok(Observable::from_text(&read(f)?)?))
                .collect::<Result<Vec<_>, HistoriesError>>()?;
            families.push(ProjectorFamily::new(t, ps)?);
        }
        let space = HistorySpace::fixed(families)?;
        if h.layout() != space.layout() {
            return Err(HistoriesError::GridMismatch(format!("Hamiltonian on `{}`", h.layout())));
        }
        let propagators = propagators_from_hamiltonian(&h, self.t0, &self.times);
        Ok(HistoriesProblem { space, rho0, propagators })
    }

    pub fn load(path: &Path) -> Result<HistoriesProblem, HistoriesError> {
        let io = |p: &Path, source| HistoriesError::Io { path: p.to_path_buf(), source };
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let m = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        m.resolve(|name| {
            let p = base.join(name);
            std::fs::read_to_string(&p).map_err(|e| io(&p, e))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit() -> SpaceLayout {
        SpaceLayout::single("q", 2).unwrap()
    }

    fn z_family(t: f64) -> ProjectorFamily {
        ProjectorFamily::computational(t, &qubit()).unwrap()
    }

    #[test]
    fn family_diagnostics() {
        let d = validate_family(&z_family(0.0));
        assert_eq!(d.completeness, 0.0);
        assert_eq!(d.max_orthogonality(), 0.0);

        let l = SpaceLayout::single("x", 4).unwrap();
        let proj = |idx: &[usize]| {
            let mut m = CMatrix::zeros(4, 4);
            for &i in idx {
                m[(i, i)] = c(1.0, 0.0);
            }
            Observable::new(l.clone(), m).unwrap()
        };
        let f = ProjectorFamily::new(0.0, vec![proj(&[0, 1]), proj(&[2]), proj(&[3])]).unwrap();
        assert!(validate_family(&f).passes(1e-12));

        let plus = PureState::from_slice(qubit(), &[c(0.5f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0)]).unwrap();
        let bad = ProjectorFamily::unchecked(0.0, vec![z_family(0.0).projectors()[0].clone(), Observable::projector(&plus)]).unwrap();
        let d = validate_family(&bad);
        assert!(d.max_orthogonality() > 0.1);
        assert!(!d.passes(1e-10));
        assert!(ProjectorFamily::new(0.0, bad.projectors().to_vec()).is_err());
    }

    #[test]
    fn single_time_is_born_rule() {
        let mut rng = random::stream(1, 0);
        let rho = random::random_density(qubit(), &mut rng);
        let space = HistorySpace::fixed(vec![z_family(1.0)]).unwrap();
        let h = Observable::zero(qubit());
        let d = decoherence_functional(&space, &rho, &propagators_from_hamiltonian(&h, 0.0, &[1.0]), Picture::Schrodinger).unwrap();
        for k in 0..2 {
            assert!((probability(&[k], &d).unwrap() - rho.matrix()[(k, k)].re).abs() < 1e-12);
        }
        assert!((d.total().re - 1.0).abs() < 1e-12);
        assert!(matches!(probability(&[5], &d), Err(HistoriesError::NotFound(_))));
    }

    /// Brute-force path sum for the two-time qubit with `H = ω σ_x`.
    fn path_sum(psi: [C64; 2], omega: f64, t1: f64, t2: f64) -> CMatrix {
        let u = |t: f64| {
            let (s, co) = (omega * t).sin_cos();
            [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
        };
        let (u1, u2) = (u(t1), u(t2 - t1));
        // amplitude of history (a, b) given a pure start
        let amp = |a: usize, b: usize| -> C64 {
            let first = u1[a][0] * psi[0] + u1[a][1] * psi[1];
            u2[b][a] * first
        };
        let mut d = CMatrix::zeros(4, 4);
        for x in 0..4 {
            for y in 0..4 {
                let (ax, bx, ay, by) = (x / 2, x % 2, y / 2, y % 2);
                // Tr[C_x ρ C_y†] = Σ_final <f|C_x|ψ><ψ|C_y†|f>, only f = b survives
                if bx == by {
                    d[(x, y)] = amp(ax, bx) * amp(ay, by).conj();
                }
            }
        }
        d
    }

    #[test]
    fn two_time_qubit_matches_path_sum() {
        let psi = [c(0.6, 0.0), c(0.0, 0.8)];
        let state = PureState::from_slice(qubit(), &psi).unwrap();
        let h = Observable::pauli_x("q").unwrap().scale(0.7);
        let times = [0.5, 1.3];
        let space = HistorySpace::fixed(vec![z_family(times[0]), z_family(times[1])]).unwrap();
        let props = propagators_from_hamiltonian(&h, 0.0, &times);
        let d = decoherence_functional(&space, &state.density(), &props, Picture::Schrodinger).unwrap();
        let oracle = path_sum(psi, 0.7, times[0], times[1]);
        assert!(linalg::max_abs_diff(&d.values, &oracle) < 1e-12);
        let dh = decoherence_functional(&space, &state.density(), &props, Picture::Heisenberg).unwrap();
        assert!(linalg::max_abs_diff(&d.values, &dh.values) < 1e-12);
        // interfering: off-diagonals present, coarse violation equals 2 Re D
        let report = check_consistency(&d, ConsistencyMode::Medium, 1e-10);
        assert!(!report.pass);
        let cg = coarse_grain(&d, &[vec![0, 1], vec![0]]).unwrap();
        let expected = 2.0 * d.value(&[0, 0], &[1, 0]).unwrap().re;
        assert!((cg.violation - expected).abs() < 1e-12);
        assert!((cg.probability - cg.member_sum - cg.violation).abs() < 1e-14);
    }

    #[test]
    fn evolved_eigenprojectors_are_consistent() {
        let mut rng = random::stream(2, 0);
        let l = SpaceLayout::new([("a", 2), ("b", 3)]).unwrap();
        let rho = random::random_density(l.clone(), &mut rng);
        let h = random::random_hermitian(l.clone(), &mut rng);
        let times = [0.3, 0.9, 1.4];
        let eig = linalg::spectral_projectors(rho.matrix(), 1e-9);
        let families: Vec<ProjectorFamily> = times
            .iter()
            .map(|&t| {
                let u = Propagator::new(&h, t);
                let ps = eig
                    .iter()
                    .map(|(_, p)| Observable::new(l.clone(), u.matrix() * p * u.matrix().adjoint()).unwrap())
                    .collect();
                ProjectorFamily::new(t, ps).unwrap()
            })
            .collect();
        let space = HistorySpace::fixed(families).unwrap();
        let props = propagators_from_hamiltonian(&h, 0.0, &times);
        let d = decoherence_functional(&space, &rho, &props, Picture::Heisenberg).unwrap();
        assert!(check_consistency(&d, ConsistencyMode::Medium, 1e-10).pass);
        // probabilities follow the eigenvalue only along constant branches
        let (vals, _) = linalg::hermitian_eigen(rho.matrix());
        assert!((probability(&[2, 2, 2], &d).unwrap() - vals[2]).abs() < 1e-10);
        assert!(probability(&[0, 1, 1], &d).unwrap().abs() < 1e-10);
    }

    #[test]
    fn weak_vs_medium() {
        let hist = |c: Vec<usize>| History { choices: c, branch_dependent: false };
        let d = DecoherenceFunctional {
            histories: vec![hist(vec![0]), hist(vec![1])],
            values: CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.2), c(0.0, -0.2), c(0.5, 0.0)]),
        };
        assert!(check_consistency(&d, ConsistencyMode::Weak, 1e-12).pass);
        assert!(!check_consistency(&d, ConsistencyMode::Medium, 1e-12).pass);
    }

    #[test]
    fn grouping_errors_and_full_group() {
        let space = HistorySpace::fixed(vec![z_family(1.0)]).unwrap();
        let rho = DensityOperator::maximally_mixed(qubit());
        let d = decoherence_functional(&space, &rho, &[Propagator::identity(qubit())], Picture::Schrodinger).unwrap();
        let all = coarse_grain(&d, &[vec![0, 1]]).unwrap();
        assert!((all.probability - 1.0).abs() < 1e-12);
        assert!(matches!(coarse_grain(&d, &[vec![0, 0]]), Err(HistoriesError::BadGrouping(_))));
        assert!(matches!(coarse_grain(&d, &[vec![]]), Err(HistoriesError::BadGrouping(_))));
        assert!(matches!(coarse_grain_partition(&d, &space, &[vec![vec![0]]]), Err(HistoriesError::BadGrouping(_))));
        assert_eq!(coarse_grain_partition(&d, &space, &[vec![vec![0], vec![1]]]).unwrap().len(), 2);
    }

    #[test]
    fn grid_mismatch() {
        let space = HistorySpace::fixed(vec![z_family(1.0), z_family(2.0)]).unwrap();
        let rho = DensityOperator::maximally_mixed(qubit());
        let r = decoherence_functional(&space, &rho, &[Propagator::identity(qubit())], Picture::Schrodinger);
        assert!(matches!(r, Err(HistoriesError::GridMismatch(_))));
        assert!(matches!(HistorySpace::fixed(vec![z_family(2.0), z_family(1.0)]), Err(HistoriesError::GridMismatch(_))));
        let five: Vec<_> = (0..5).map(|i| z_family(i as f64)).collect();
        assert!(matches!(HistorySpace::fixed(five), Err(HistoriesError::TooLarge(_))));
    }

    #[test]
    fn schmidt_projectors_pure_single_time() {
        let mut rng = random::stream(4, 0);
        let l = SpaceLayout::new([("s", 2), ("e", 2)]).unwrap();
        let a = random::haar_state(SpaceLayout::single("s", 2).unwrap(), &mut rng);
        let b = random::haar_state(SpaceLayout::single("e", 2).unwrap(), &mut rng);
        let psi = hilbert::tensor(&[&a, &b]).unwrap();
        let sh = schmidt_history_projectors(&psi.density(), &["s"], &[Propagator::identity(l)], &[0.0]).unwrap();
        let node = &sh.nodes[&Vec::new()];
        assert_eq!(node.family.len(), 2);
        let p = Observable::projector(&a);
        assert!(linalg::max_abs_diff(node.family.projectors()[0].matrix(), p.matrix()) < 1e-10);
    }

    #[test]
    fn schmidt_histories_are_consistent() {
        let mut rng = random::stream(5, 0);
        let l = SpaceLayout::new([("s", 2), ("e", 3)]).unwrap();
        let psi = random::haar_state(l.clone(), &mut rng);
        let h = random::random_hermitian(l.clone(), &mut rng);
        let times = [0.4, 1.1, 1.5];
        let props = propagators_from_hamiltonian(&h, 0.0, &times);
        let sh = schmidt_history_projectors(&psi.density(), &["s"], &props, &times).unwrap();
        assert_eq!(sh.nodes.len(), 1 + 2 + 4);
        let space = sh.space().unwrap().lifted(&l).unwrap();
        assert!(space.is_branch_dependent());
        let d = decoherence_functional(&space, &psi.density(), &props, Picture::Schrodinger).unwrap();
        assert!((d.total().re - 1.0).abs() < 1e-10);
        assert!(d.hermiticity_residual() < 1e-12);
        let inst = schmidt_instability(&psi.density(), &["s"], &props, &times, 1).unwrap();
        assert_eq!(inst.distances.len(), 1);
        assert!(inst.max_distance > 1e-3);
    }

    #[test]
    fn manifest_checks() {
        let ok = "initial_pure = \"psi\"\nhamiltonian = \"h\"\ntimes = [1.0]\nfamilies = [[\"p0\", \"p1\"]]\n";
        assert!(HistoriesManifest::parse(ok).is_ok());
        assert!(HistoriesManifest::parse(&ok.replace("times = [1.0]", "times = [1.0, 2.0]")).is_err());
        assert!(HistoriesManifest::parse(&format!("{ok}initial_density = \"r\"\n")).is_err());
        assert!(HistoriesManifest::parse("x = 1").is_err());
    }
}
