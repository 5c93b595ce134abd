//! Small dense helpers on top of nalgebra shared by every engine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
///
/// Column `i` of the returned matrix is the eigenvector of `values[i]`.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    assert!(m.is_square(), "hermitian_eigen needs a square matrix");
    // symmetrize first so the solver never sees rounding asymmetry
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `f(H)` for Hermitian `H` through its eigendecomposition.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    if is_diagonal(m) {
        let d = CVector::from_iterator(m.nrows(), m.diagonal().iter().map(|z| f(z.re)));
        return CMatrix::from_diagonal(&d);
    }
    let (values, vectors) = hermitian_eigen(m);
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| f(v)),
    ));
    &vectors * diag * vectors.adjoint()
}

/// Every off-diagonal entry is exactly zero.
pub fn is_diagonal(m: &CMatrix) -> bool {
    m.is_square()
        && m.iter().enumerate().all(|(k, z)| {
            let (i, j) = (k % m.nrows(), k / m.nrows());
            i == j || (z.re == 0.0 && z.im == 0.0)
        })
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest |eigenvalue| of a Hermitian matrix.
pub fn hermitian_operator_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (values, _) = hermitian_eigen(m);
    values.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Unitary (isometric) polar factor `W Z†` of `m = W Σ Z†`.
pub fn polar_isometry(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

/// Projector `|v⟩⟨v|` (no normalization applied).
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Fidelity-style overlap `|⟨a|b⟩|` of two normalized vectors.
pub fn overlap_abs(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm()
}

/// Angle between the rays spanned by `a` and `b`.
pub fn ray_angle(a: &CVector, b: &CVector) -> f64 {
    let c = overlap_abs(a, b) / (a.norm() * b.norm());
    c.clamp(0.0, 1.0).acos()
}

/// Groups descending eigenvalues whose consecutive gaps are below `gap`.
///
/// Returns index ranges into the eigenvalue list.
pub fn group_by_gap(values: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i - 1] - values[i]).abs() >= gap {
            if start < i {
                groups.push(start..i);
            }
            start = i;
        }
    }
    groups
}

/// Spectral projectors of a Hermitian matrix with eigenvalues grouped within `gap`.
///
/// Returns `(mean eigenvalue, projector)` pairs in descending eigenvalue order.
pub fn spectral_projectors(m: &CMatrix, gap: f64) -> Vec<(f64, CMatrix)> {
    let (values, vectors) = hermitian_eigen(m);
    group_by_gap(&values, gap)
        .into_iter()
        .map(|r| {
            let cols = vectors.columns(r.start, r.len()).into_owned();
            let mean = values[r.clone()].iter().sum::<f64>() / r.len() as f64;
            (mean, &cols * cols.adjoint())
        })
        .collect()
}
