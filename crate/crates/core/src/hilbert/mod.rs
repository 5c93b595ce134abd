//! States, operators and reductions over labeled tensor-product spaces.

mod layout;
mod schmidt;
pub mod text;
mod tridecomp;

use thiserror::Error;

use crate::linalg::{self, CMatrix, CVector};
use crate::C64;

pub use layout::{Factor, SpaceLayout};
pub use schmidt::{schmidt, SchmidtDecomposition};
pub use tridecomp::{tridecomposition_search, TriDecomposition, TriSearchOptions};

/// Tolerance for construction-time invariants (norm, trace, Hermiticity).
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for derived identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a density operator.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HilbertError {
    #[error("label `{0}` appears more than once")]
    LabelCollision(String),
    #[error("label `{0}` is not part of the layout")]
    LabelNotFound(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("bad bipartition: {0}")]
    BadBipartition(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn same_layout(a: &SpaceLayout, b: &SpaceLayout) -> Result<(), HilbertError> {
    if a == b {
        Ok(())
    } else {
        Err(HilbertError::LayoutMismatch(format!("`{a}` vs `{b}`")))
    }
}

/// Normalized state vector on a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    layout: SpaceLayout,
    amplitudes: CVector,
}

impl PureState {
    /// Checked constructor; the norm must already be 1 within [`CONSTRUCTION_TOL`].
    pub fn new(layout: SpaceLayout, amplitudes: CVector) -> Result<Self, HilbertError> {
        if amplitudes.len() != layout.dim() {
            return Err(HilbertError::InvalidState(format!(
                "{} amplitudes for dimension {}",
                amplitudes.len(),
                layout.dim()
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(HilbertError::InvalidState("non-finite amplitude".into()));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(HilbertError::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(Self { layout, amplitudes })
    }

    /// Normalizes `amplitudes` before construction.
    pub fn normalized(layout: SpaceLayout, amplitudes: CVector) -> Result<Self, HilbertError> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(HilbertError::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::new(layout, amplitudes.unscale(norm))
    }

    pub fn from_slice(layout: SpaceLayout, amplitudes: &[C64]) -> Result<Self, HilbertError> {
        Self::new(layout, CVector::from_column_slice(amplitudes))
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(layout: SpaceLayout, index: usize) -> Result<Self, HilbertError> {
        let dim = layout.dim();
        if index >= dim {
            return Err(HilbertError::InvalidState(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes: v })
    }

    pub(crate) fn from_parts_unchecked(layout: SpaceLayout, amplitudes: CVector) -> Self {
        debug_assert_eq!(layout.dim(), amplitudes.len());
        Self { layout, amplitudes }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn inner(&self, other: &PureState) -> Result<C64, HilbertError> {
        same_layout(&self.layout, &other.layout)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩|`, the global-phase-insensitive overlap.
    pub fn fidelity(&self, other: &PureState) -> Result<f64, HilbertError> {
        Ok(self.inner(other)?.norm())
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            layout: self.layout.clone(),
            matrix: linalg::outer(&self.amplitudes),
        }
    }

    /// Same amplitudes under renamed factor labels (dimensions must agree).
    pub fn relabel(&self, layout: SpaceLayout) -> Result<Self, HilbertError> {
        let dims_a: Vec<usize> = self.layout.factors().iter().map(|f| f.dim).collect();
        let dims_b: Vec<usize> = layout.factors().iter().map(|f| f.dim).collect();
        if dims_a != dims_b {
            return Err(HilbertError::LayoutMismatch(format!(
                "cannot relabel `{}` as `{layout}`",
                self.layout
            )));
        }
        Ok(Self { layout, amplitudes: self.amplitudes.clone() })
    }

    /// Same state with its factors listed in the order of `target`.
    pub fn reorder(&self, target: &SpaceLayout) -> Result<Self, HilbertError> {
        let perm = factor_permutation(&self.layout, target)?;
        let amplitudes = CVector::from_iterator(perm.len(), perm.iter().map(|&i| self.amplitudes[i]));
        Ok(Self { layout: target.clone(), amplitudes })
    }

    /// Reduced density operator on `keep`, computed as `M M†` from the
    /// amplitude matrix without forming the global projector.
    pub fn reduced<S: AsRef<str>>(&self, keep: &[S]) -> Result<DensityOperator, HilbertError> {
        if keep.is_empty() {
            return Err(HilbertError::InvalidLayout("keep set is empty".into()));
        }
        let kept = self.layout.positions_of(keep)?;
        let traced = self.layout.complement(&kept);
        let kept_layout = self.layout.sublayout(&kept);
        let m = amplitude_matrix(&self.layout, &self.amplitudes, &kept, &traced);
        let matrix = &m * m.adjoint();
        Ok(DensityOperator { layout: kept_layout, matrix: hermitize(matrix) })
    }
}

/// Amplitudes reshaped to a `(dim kept) × (dim traced)` matrix.
pub(crate) fn amplitude_matrix(
    layout: &SpaceLayout,
    amplitudes: &CVector,
    kept: &[usize],
    traced: &[usize],
) -> CMatrix {
    let rows = layout.sublayout(kept).dim();
    let cols = if traced.is_empty() { 1 } else { layout.sublayout(traced).dim() };
    let mut m = CMatrix::zeros(rows, cols);
    for (f, amp) in amplitudes.iter().enumerate() {
        let d = layout.digits(f);
        m[(layout.index_of(&d, kept), layout.index_of(&d, traced))] = *amp;
    }
    m
}

/// `perm[f]` is the index in `source` of basis state `f` of `target`, where
/// both layouts hold the same factors in different orders.
fn factor_permutation(source: &SpaceLayout, target: &SpaceLayout) -> Result<Vec<usize>, HilbertError> {
    let mismatch = || {
        HilbertError::LayoutMismatch(format!("`{source}` and `{target}` are not reorderings of each other"))
    };
    if source.factors().len() != target.factors().len() {
        return Err(mismatch());
    }
    let mut where_in_target = Vec::with_capacity(source.factors().len());
    for f in source.factors() {
        let p = target.position(&f.label).ok_or_else(mismatch)?;
        if target.factors()[p].dim != f.dim {
            return Err(mismatch());
        }
        where_in_target.push(p);
    }
    Ok((0..target.dim())
        .map(|f| {
            let d = target.digits(f);
            where_in_target
                .iter()
                .zip(source.factors())
                .fold(0, |acc, (&p, fac)| acc * fac.dim + d[p])
        })
        .collect())
}

fn hermitize(m: CMatrix) -> CMatrix {
    (&m + m.adjoint()).scale(0.5)
}

/// Positive, unit-trace Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    layout: SpaceLayout,
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(layout: SpaceLayout, matrix: CMatrix) -> Result<Self, HilbertError> {
        check_square(&layout, &matrix)?;
        let herm = linalg::hermiticity_residual(&matrix);
        if herm > CONSTRUCTION_TOL {
            return Err(HilbertError::InvalidOperator(format!(
                "not Hermitian (residual {herm:e})"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr - C64::new(1.0, 0.0)).norm() > CONSTRUCTION_TOL {
            return Err(HilbertError::InvalidOperator(format!("trace {tr} differs from 1")));
        }
        let (values, _) = linalg::hermitian_eigen(&matrix);
        if let Some(min) = values.last() {
            if *min < EIGENVALUE_FLOOR {
                return Err(HilbertError::InvalidOperator(format!(
                    "negative eigenvalue {min:e}"
                )));
            }
        }
        Ok(Self { layout, matrix })
    }

    pub fn maximally_mixed(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        Self {
            layout,
            matrix: CMatrix::identity(d, d).unscale(d as f64),
        }
    }

    /// Convex mixture `Σ w_i |ψ_i⟩⟨ψ_i|`; weights must sum to one.
    pub fn mixture(parts: &[(f64, &PureState)]) -> Result<Self, HilbertError> {
        let first = parts
            .first()
            .ok_or_else(|| HilbertError::InvalidOperator("empty mixture".into()))?;
        let layout = first.1.layout().clone();
        let mut m = CMatrix::zeros(layout.dim(), layout.dim());
        for (w, psi) in parts {
            same_layout(&layout, psi.layout())?;
            if *w < 0.0 {
                return Err(HilbertError::InvalidOperator("negative mixture weight".into()));
            }
            m += linalg::outer(psi.amplitudes()).scale(*w);
        }
        Self::new(layout, m)
    }

    pub(crate) fn from_parts_unchecked(layout: SpaceLayout, matrix: CMatrix) -> Self {
        Self { layout, matrix }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Eigenvalues, descending.
    /// Same operator with its factors listed in the order of `target`.
    pub fn reorder(&self, target: &SpaceLayout) -> Result<Self, HilbertError> {
        let perm = factor_permutation(&self.layout, target)?;
        let n = perm.len();
        let matrix = CMatrix::from_fn(n, n, |i, j| self.matrix[(perm[i], perm[j])]);
        Ok(Self { layout: target.clone(), matrix })
    }

    pub fn spectrum(&self) -> Vec<f64> {
        linalg::hermitian_eigen(&self.matrix).0
    }
}

fn check_square(layout: &SpaceLayout, matrix: &CMatrix) -> Result<(), HilbertError> {
    let d = layout.dim();
    if matrix.nrows() != d || matrix.ncols() != d {
        return Err(HilbertError::InvalidOperator(format!(
            "matrix is {}x{}, layout dimension {d}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(HilbertError::InvalidOperator("non-finite entry".into()));
    }
    Ok(())
}

/// Hermitian operator on a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    layout: SpaceLayout,
    matrix: CMatrix,
}

impl Observable {
    pub fn new(layout: SpaceLayout, matrix: CMatrix) -> Result<Self, HilbertError> {
        check_square(&layout, &matrix)?;
        let herm = linalg::hermiticity_residual(&matrix);
        if herm > CONSTRUCTION_TOL {
            return Err(HilbertError::InvalidOperator(format!(
                "not Hermitian (residual {herm:e})"
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn from_real_rows(layout: SpaceLayout, rows: &[&[f64]]) -> Result<Self, HilbertError> {
        let d = layout.dim();
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(HilbertError::InvalidOperator("row shape mismatch".into()));
        }
        let m = CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j], 0.0));
        Self::new(layout, m)
    }

    pub fn zero(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        Self { layout, matrix: CMatrix::zeros(d, d) }
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        Self { layout, matrix: CMatrix::identity(d, d) }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(psi: &PureState) -> Self {
        Self {
            layout: psi.layout().clone(),
            matrix: linalg::outer(psi.amplitudes()),
        }
    }

    pub fn pauli_x(label: &str) -> Result<Self, HilbertError> {
        Self::from_real_rows(SpaceLayout::single(label, 2)?, &[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn pauli_y(label: &str) -> Result<Self, HilbertError> {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
        );
        Self::new(SpaceLayout::single(label, 2)?, m)
    }

    pub fn pauli_z(label: &str) -> Result<Self, HilbertError> {
        Self::from_real_rows(SpaceLayout::single(label, 2)?, &[&[1.0, 0.0], &[0.0, -1.0]])
    }

    pub(crate) fn from_parts_unchecked(layout: SpaceLayout, matrix: CMatrix) -> Self {
        Self { layout, matrix }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { layout: self.layout.clone(), matrix: self.matrix.scale(s) }
    }

    pub fn add(&self, other: &Observable) -> Result<Self, HilbertError> {
        same_layout(&self.layout, &other.layout)?;
        Ok(Self { layout: self.layout.clone(), matrix: &self.matrix + &other.matrix })
    }

    /// `A ⊗ B` on the joined layout.
    pub fn tensor(&self, other: &Observable) -> Result<Self, HilbertError> {
        Ok(Self {
            layout: self.layout.join(&other.layout)?,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    /// Embeds this operator into `full`, acting as identity on the other factors.
    pub fn lift(&self, full: &SpaceLayout) -> Result<Self, HilbertError> {
        Ok(Self {
            layout: full.clone(),
            matrix: lift_matrix(&self.layout, &self.matrix, full)?,
        })
    }

    /// Operator norm (largest |eigenvalue|).
    pub fn operator_norm(&self) -> f64 {
        linalg::hermitian_operator_norm(&self.matrix)
    }
}

/// Embeds `matrix` (acting on `sub`) into `full` as `matrix ⊗ I` with factors
/// placed according to their labels.
pub fn lift_matrix(
    sub: &SpaceLayout,
    matrix: &CMatrix,
    full: &SpaceLayout,
) -> Result<CMatrix, HilbertError> {
    let labels: Vec<&str> = sub.labels().collect();
    let pos = full.positions_of(&labels)?;
    if full.sublayout(&pos) != *sub {
        return Err(HilbertError::LayoutMismatch(format!(
            "`{sub}` is not a sub-layout of `{full}` in factor order"
        )));
    }
    let rest = full.complement(&pos);
    let table = full.split_table(&[&pos, &rest]);
    let d = full.dim();
    let mut out = CMatrix::zeros(d, d);
    for f in 0..d {
        for g in 0..d {
            if table[f][1] == table[g][1] {
                out[(f, g)] = matrix[(table[f][0], table[g][0])];
            }
        }
    }
    Ok(out)
}

/// Kronecker product of states in the given order.
pub fn tensor(states: &[&PureState]) -> Result<PureState, HilbertError> {
    let (first, rest) = states
        .split_first()
        .ok_or_else(|| HilbertError::InvalidState("tensor of no states".into()))?;
    let mut layout = first.layout.clone();
    let mut amps = first.amplitudes.clone();
    for s in rest {
        layout = layout.join(&s.layout)?;
        amps = amps.kronecker(&s.amplitudes);
    }
    Ok(PureState { layout, amplitudes: amps })
}

/// Kronecker product of density operators in the given order.
pub fn tensor_density(ops: &[&DensityOperator]) -> Result<DensityOperator, HilbertError> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| HilbertError::InvalidOperator("tensor of no operators".into()))?;
    let mut layout = first.layout.clone();
    let mut m = first.matrix.clone();
    for o in rest {
        layout = layout.join(&o.layout)?;
        m = m.kronecker(&o.matrix);
    }
    Ok(DensityOperator { layout, matrix: m })
}

/// Traces out every factor not in `keep`.
pub fn partial_trace<S: AsRef<str>>(
    rho: &DensityOperator,
    keep: &[S],
) -> Result<DensityOperator, HilbertError> {
    if keep.is_empty() {
        return Err(HilbertError::InvalidLayout("keep set is empty".into()));
    }
    let kept = rho.layout.positions_of(keep)?;
    let traced = rho.layout.complement(&kept);
    let kept_layout = rho.layout.sublayout(&kept);
    let dk = kept_layout.dim();
    let dt = rho.layout.dim() / dk;
    let table = rho.layout.split_table(&[&kept, &traced]);
    // full index of (kept i, traced k)
    let mut full = vec![0usize; dk * dt];
    for (f, row) in table.iter().enumerate() {
        full[row[0] * dt + row[1]] = f;
    }
    let mut out = CMatrix::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..dt {
                acc += rho.matrix[(full[i * dt + k], full[j * dt + k])];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityOperator { layout: kept_layout, matrix: hermitize(out) })
}

/// Imaginary residue above this is reported as an error by [`expectation`].
const IMAG_RESIDUE: f64 = 1e-10;

/// `Tr(ρ Ô)`.
pub fn expectation(rho: &DensityOperator, obs: &Observable) -> Result<f64, HilbertError> {
    same_layout(&rho.layout, &obs.layout)?;
    let v = linalg::trace_of_product(&rho.matrix, &obs.matrix);
    if v.im.abs() > IMAG_RESIDUE * (1.0 + v.re.abs()) {
        return Err(HilbertError::InvalidOperator(format!(
            "expectation has imaginary part {:e}",
            v.im
        )));
    }
    Ok(v.re)
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityOperator) -> f64 {
    rho.matrix.iter().map(|z| z.norm_sqr()).sum()
}

/// `-Σ λ ln λ` with `0 ln 0 = 0`.
pub fn vn_entropy(rho: &DensityOperator) -> f64 {
    rho.spectrum()
        .into_iter()
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
}

/// `exp(-iHt)` for a Hermitian `H`.
#[derive(Debug, Clone)]
pub struct Propagator {
    layout: SpaceLayout,
    matrix: CMatrix,
}

impl Propagator {
    pub fn new(h: &Observable, t: f64) -> Self {
        let matrix = linalg::hermitian_function(&h.matrix, |e| C64::from_polar(1.0, -e * t));
        Self { layout: h.layout.clone(), matrix }
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        Self { layout, matrix: CMatrix::identity(d, d) }
    }

    /// Wraps an explicit unitary; checked to 1e-10.
    pub fn from_unitary(layout: SpaceLayout, matrix: CMatrix) -> Result<Self, HilbertError> {
        check_square(&layout, &matrix)?;
        let d = layout.dim();
        let resid = linalg::max_abs_diff(&(matrix.adjoint() * &matrix), &CMatrix::identity(d, d));
        if resid > IDENTITY_TOL {
            return Err(HilbertError::InvalidOperator(format!(
                "not unitary (residual {resid:e})"
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `self` applied after `earlier`.
    pub fn then_after(&self, earlier: &Propagator) -> Result<Propagator, HilbertError> {
        same_layout(&self.layout, &earlier.layout)?;
        Ok(Propagator { layout: self.layout.clone(), matrix: &self.matrix * &earlier.matrix })
    }

    pub fn apply_pure(&self, psi: &PureState) -> Result<PureState, HilbertError> {
        same_layout(&self.layout, &psi.layout)?;
        Ok(PureState { layout: psi.layout.clone(), amplitudes: &self.matrix * &psi.amplitudes })
    }

    pub fn apply_density(&self, rho: &DensityOperator) -> Result<DensityOperator, HilbertError> {
        same_layout(&self.layout, &rho.layout)?;
        let m = &self.matrix * &rho.matrix * self.matrix.adjoint();
        Ok(DensityOperator { layout: rho.layout.clone(), matrix: hermitize(m) })
    }
}

/// States that can be propagated by `exp(-iHt)`.
pub trait Evolve: Sized {
    fn evolve(&self, h: &Observable, t: f64) -> Result<Self, HilbertError>;
}

impl Evolve for PureState {
    fn evolve(&self, h: &Observable, t: f64) -> Result<Self, HilbertError> {
        same_layout(&self.layout, &h.layout)?;
        Propagator::new(h, t).apply_pure(self)
    }
}

impl Evolve for DensityOperator {
    fn evolve(&self, h: &Observable, t: f64) -> Result<Self, HilbertError> {
        same_layout(&self.layout, &h.layout)?;
        Propagator::new(h, t).apply_density(self)
    }
}

pub fn evolve<S: Evolve>(state: &S, h: &Observable, t: f64) -> Result<S, HilbertError> {
    state.evolve(h, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit(label: &str, a: C64, b: C64) -> PureState {
        PureState::normalized(SpaceLayout::single(label, 2).unwrap(), CVector::from_vec(vec![a, b])).unwrap()
    }

    #[test]
    fn tensor_basis_product() {
        let z = qubit("a", c(1.0, 0.0), c(0.0, 0.0));
        let w = qubit("b", c(1.0, 0.0), c(0.0, 0.0));
        let p = tensor(&[&z, &w]).unwrap();
        assert_eq!(p.amplitudes().as_slice(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn tensor_plus_one() {
        let plus = qubit("a", c(1.0, 0.0), c(1.0, 0.0));
        let one = qubit("b", c(0.0, 0.0), c(1.0, 0.0));
        let p = tensor(&[&plus, &one]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [c(0.0, 0.0), c(h, 0.0), c(0.0, 0.0), c(h, 0.0)];
        for (x, y) in p.amplitudes().iter().zip(expect) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn tensor_label_collision() {
        let a = qubit("a", c(1.0, 0.0), c(0.0, 0.0));
        assert!(matches!(tensor(&[&a, &a]), Err(HilbertError::LabelCollision(_))));
    }

    #[test]
    fn tensor_of_random_qubits_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let states: Vec<PureState> = ["a", "b", "c"]
            .iter()
            .map(|l| random::haar_state(SpaceLayout::single(*l, 2).unwrap(), &mut rng))
            .collect();
        let refs: Vec<&PureState> = states.iter().collect();
        let p = tensor(&refs).unwrap();
        let norm: f64 = p.amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epr_reduced_is_half_identity() {
        let l = SpaceLayout::new([("one", 2), ("two", 2)]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let epr = PureState::from_slice(l, &[c(0.0, 0.0), c(h, 0.0), c(-h, 0.0), c(0.0, 0.0)]).unwrap();
        let r = partial_trace(&epr.density(), &["one"]).unwrap();
        let expect = CMatrix::identity(2, 2).scale(0.5);
        assert!(linalg::max_abs_diff(r.matrix(), &expect) < 1e-15);
        assert!(linalg::max_abs_diff(epr.reduced(&["one"]).unwrap().matrix(), &expect) < 1e-15);
    }

    #[test]
    fn product_state_trace_recovers_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ra = random::random_density(SpaceLayout::single("a", 3).unwrap(), &mut rng);
        let rb = random::random_density(SpaceLayout::single("b", 2).unwrap(), &mut rng);
        let joint = tensor_density(&[&ra, &rb]).unwrap();
        let back = partial_trace(&joint, &["a"]).unwrap();
        assert!(linalg::max_abs_diff(back.matrix(), ra.matrix()) < 1e-14);
    }

    #[test]
    fn partial_trace_unknown_label() {
        let rho = DensityOperator::maximally_mixed(SpaceLayout::single("a", 2).unwrap());
        assert_eq!(
            partial_trace(&rho, &["zz"]).unwrap_err(),
            HilbertError::LabelNotFound("zz".into())
        );
    }

    #[test]
    fn expectation_basic_cases() {
        let zero = qubit("q", c(1.0, 0.0), c(0.0, 0.0)).density();
        let sz = Observable::pauli_z("q").unwrap();
        assert!((expectation(&zero, &sz).unwrap() - 1.0).abs() < 1e-15);
        let mixed = DensityOperator::maximally_mixed(SpaceLayout::single("q", 2).unwrap());
        for o in [Observable::pauli_x("q").unwrap(), Observable::pauli_y("q").unwrap(), sz] {
            assert!(expectation(&mixed, &o).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn expectation_layout_mismatch() {
        let rho = DensityOperator::maximally_mixed(SpaceLayout::single("a", 2).unwrap());
        let o = Observable::pauli_z("b").unwrap();
        assert!(matches!(expectation(&rho, &o), Err(HilbertError::LayoutMismatch(_))));
    }

    #[test]
    fn purity_entropy_extremes() {
        let pure = qubit("q", c(0.6, 0.0), c(0.0, 0.8)).density();
        assert!((purity(&pure) - 1.0).abs() < 1e-14);
        assert!(vn_entropy(&pure).abs() < 1e-12);
        let mixed = DensityOperator::maximally_mixed(SpaceLayout::single("q", 2).unwrap());
        assert!((purity(&mixed) - 0.5).abs() < 1e-15);
        assert!((vn_entropy(&mixed) - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn evolve_zero_time_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = SpaceLayout::qubits("q", 2).unwrap();
        let psi = random::haar_state(l.clone(), &mut rng);
        let h = random::random_hermitian(l.clone(), &mut rng);
        let same = psi.evolve(&h, 0.0).unwrap();
        assert!((same.fidelity(&psi).unwrap() - 1.0).abs() < 1e-12);

        let diag = Observable::from_real_rows(
            l.clone(),
            &[&[1.0, 0.0, 0.0, 0.0], &[0.0, -2.0, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.0], &[0.0, 0.0, 0.0, 3.0]],
        )
        .unwrap();
        let basis = PureState::basis(l, 1).unwrap();
        let out = basis.evolve(&diag, 0.9).unwrap();
        assert!((out.amplitudes()[1] - C64::from_polar(1.0, 1.8)).norm() < 1e-12);
        assert!(out.amplitudes().iter().enumerate().all(|(i, z)| i == 1 || z.norm() < 1e-14));
    }

    #[test]
    fn density_rejects_non_hermitian() {
        let l = SpaceLayout::single("q", 2).unwrap();
        let m = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityOperator::new(l, m).is_err());
    }

    #[test]
    fn lift_places_factor() {
        let l = SpaceLayout::new([("a", 2), ("b", 2)]).unwrap();
        let zb = Observable::pauli_z("b").unwrap().lift(&l).unwrap();
        let diag: Vec<f64> = zb.matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0, -1.0]);
    }
}
