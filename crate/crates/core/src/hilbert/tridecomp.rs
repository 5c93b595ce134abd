use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{polar_isometry, CMatrix, CVector};
use crate::random;
use crate::C64;

use super::{HilbertError, PureState};

/// `|ψ⟩ = Σ_i α_i |a_i⟩|b_i⟩|c_i⟩` with orthonormal families per party.
#[derive(Debug, Clone)]
pub struct TriDecomposition {
    /// Non-negative, descending; phases are absorbed into the first party.
    pub coefficients: Vec<f64>,
    pub parties: [Vec<CVector>; 3],
    /// `‖ψ − Σ α_i |a_i b_i c_i⟩‖²`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct TriSearchOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for TriSearchOptions {
    fn default() -> Self {
        Self { restarts: 200, max_iterations: 400, seed: 0x7715_3d0c }
    }
}

/// Amplitudes as a 3-index tensor `t[i][j][k]`.
struct Tensor3 {
    dims: [usize; 3],
    data: Vec<C64>,
}

impl Tensor3 {
    fn at(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Contracts every party except `party` with `conj(u_q[:, r])`, for each term `r`.
    /// Column `r` of the result lives in the space of `party`.
    fn partial_contractions(&self, party: usize, u: &[CMatrix; 3]) -> CMatrix {
        let rank = u[0].ncols();
        let mut out = CMatrix::zeros(self.dims[party], rank);
        for r in 0..rank {
            for i in 0..self.dims[0] {
                for j in 0..self.dims[1] {
                    for k in 0..self.dims[2] {
                        let idx = [i, j, k];
                        let mut w = self.at(i, j, k);
                        for (q, uq) in u.iter().enumerate() {
                            if q != party {
                                w *= uq[(idx[q], r)].conj();
                            }
                        }
                        out[(idx[party], r)] += w;
                    }
                }
            }
        }
        out
    }

    fn diagonal(&self, u: &[CMatrix; 3]) -> Vec<C64> {
        let v = self.partial_contractions(0, u);
        (0..u[0].ncols())
            .map(|r| u[0].column(r).dotc(&v.column(r)))
            .collect()
    }
}

fn ascend(t: &Tensor3, mut u: [CMatrix; 3], max_iterations: usize) -> ([CMatrix; 3], Vec<C64>) {
    let mut last = f64::NEG_INFINITY;
    for _ in 0..max_iterations {
        for party in 0..3 {
            let v = t.partial_contractions(party, &u);
            u[party] = polar_isometry(&v);
        }
        let score: f64 = t.diagonal(&u).iter().map(|z| z.re).sum();
        if score - last < 1e-14 {
            break;
        }
        last = score;
    }
    let diag = t.diagonal(&u);
    (u, diag)
}

/// Searches for a GHZ-form (tri-orthogonal) decomposition of `psi` over the
/// three label groups; `None` when no restart reaches `residual < tol`.
pub fn tridecomposition_search<S: AsRef<str>>(
    psi: &PureState,
    parts: [&[S]; 3],
    tol: f64,
) -> Result<Option<TriDecomposition>, HilbertError> {
    tridecomposition_search_with(psi, parts, tol, &TriSearchOptions::default())
}

pub fn tridecomposition_search_with<S: AsRef<str>>(
    psi: &PureState,
    parts: [&[S]; 3],
    tol: f64,
    opts: &TriSearchOptions,
) -> Result<Option<TriDecomposition>, HilbertError> {
    let layout = psi.layout();
    let bad = |m: String| HilbertError::BadBipartition(m);
    let mut pos: Vec<Vec<usize>> = Vec::new();
    for p in parts {
        if p.is_empty() {
            return Err(bad("every party needs at least one factor".into()));
        }
        pos.push(layout.positions_of(p).map_err(|e| bad(e.to_string()))?);
    }
    let mut all: Vec<usize> = pos.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    if all.len() != layout.factors().len() || pos.iter().map(Vec::len).sum::<usize>() != all.len() {
        return Err(bad("parties must partition the factors".into()));
    }
    let dims = [0, 1, 2].map(|i| layout.sublayout(&pos[i]).dim());
    let mut data = vec![C64::new(0.0, 0.0); layout.dim()];
    for (f, amp) in psi.amplitudes().iter().enumerate() {
        let d = layout.digits(f);
        let idx = [0, 1, 2].map(|i| layout.index_of(&d, &pos[i]));
        data[(idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]] = *amp;
    }
    let t = Tensor3 { dims, data };
    let rank = *dims.iter().min().expect("three parties");

    // first start: party-1 Schmidt vectors, then the induced partners
    let mut starts: Vec<[CMatrix; 3]> = Vec::new();
    {
        let m = CMatrix::from_fn(dims[0], dims[1] * dims[2], |i, jk| t.data[i * dims[1] * dims[2] + jk]);
        let svd = m.svd(true, false);
        let u0 = svd.u.expect("u").columns(0, rank).into_owned();
        let identity = |d: usize| CMatrix::identity(d, rank);
        starts.push([u0, identity(dims[1]), identity(dims[2])]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        starts.push([0, 1, 2].map(|i| random::haar_isometry(dims[i], rank, &mut rng)));
    }

    for start in starts {
        let (u, diag) = ascend(&t, start, opts.max_iterations);
        let captured: f64 = diag.iter().map(|z| z.norm_sqr()).sum();
        if 1.0 - captured >= tol {
            continue;
        }
        let mut terms: Vec<(f64, usize)> = diag
            .iter()
            .enumerate()
            .map(|(i, z)| (z.norm(), i))
            .filter(|(a, _)| a * a >= tol)
            .collect();
        terms.sort_by(|a, b| b.0.total_cmp(&a.0));
        let kept: f64 = terms.iter().map(|(a, _)| a * a).sum();
        let parties = [0, 1, 2].map(|p| {
            terms
                .iter()
                .map(|&(_, i)| {
                    let col = u[p].column(i).into_owned();
                    if p == 0 && diag[i].norm() > 0.0 {
                        // absorb the phase of α_i
                        col * (diag[i] / diag[i].norm())
                    } else {
                        col
                    }
                })
                .collect()
        });
        return Ok(Some(TriDecomposition {
            coefficients: terms.iter().map(|(a, _)| *a).collect(),
            parties,
            residual: (1.0 - kept).max(0.0),
        }));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SpaceLayout;

    fn three_qubits(amps: &[(usize, f64)]) -> PureState {
        let mut v = CVector::zeros(8);
        for &(i, a) in amps {
            v[i] = C64::new(a, 0.0);
        }
        PureState::normalized(SpaceLayout::qubits("q", 3).unwrap(), v).unwrap()
    }

    const PARTS: [&[&str]; 3] = [&["q0"], &["q1"], &["q2"]];

    #[test]
    fn ghz_found() {
        let ghz = three_qubits(&[(0, 1.0), (7, 1.0)]);
        let d = tridecomposition_search(&ghz, PARTS, 1e-6).unwrap().expect("ghz decomposes");
        assert_eq!(d.coefficients.len(), 2);
        for c in &d.coefficients {
            assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        }
    }

    #[test]
    fn product_single_term() {
        let p = three_qubits(&[(0, 1.0)]);
        let d = tridecomposition_search(&p, PARTS, 1e-6).unwrap().expect("product decomposes");
        assert_eq!(d.coefficients.len(), 1);
        assert!((d.coefficients[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn w_state_absent() {
        let w = three_qubits(&[(1, 1.0), (2, 1.0), (4, 1.0)]);
        assert!(tridecomposition_search(&w, PARTS, 1e-6).unwrap().is_none());
    }

    #[test]
    fn reconstruction_matches_state() {
        // unequal GHZ-type weights in rotated local bases
        let ghz = three_qubits(&[(0, 0.8), (7, 0.6)]);
        let d = tridecomposition_search(&ghz, PARTS, 1e-8).unwrap().unwrap();
        let mut v = CVector::zeros(8);
        for (i, &c) in d.coefficients.iter().enumerate() {
            let t = d.parties[0][i].kronecker(&d.parties[1][i]).kronecker(&d.parties[2][i]);
            v += t * C64::new(c, 0.0);
        }
        assert!((v - ghz.amplitudes()).norm() < 1e-6);
    }
}
