use crate::linalg::CVector;
use crate::C64;

use super::{amplitude_matrix, HilbertError, PureState, SpaceLayout};

/// Coefficients below this are treated as numerically zero rank.
const RANK_FLOOR: f64 = 1e-13;

/// `|ψ⟩ = Σ_i c_i |l_i⟩|r_i⟩` with `c_i` descending.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub left_basis: Vec<CVector>,
    pub right_basis: Vec<CVector>,
    pub left_layout: SpaceLayout,
    pub right_layout: SpaceLayout,
    source_layout: SpaceLayout,
    left_positions: Vec<usize>,
    right_positions: Vec<usize>,
}

impl SchmidtDecomposition {
    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    /// Rebuilds the state in the original layout's amplitude order.
    pub fn reconstruct(&self) -> CVector {
        let layout = &self.source_layout;
        let mut out = CVector::zeros(layout.dim());
        for (f, slot) in out.iter_mut().enumerate() {
            let d = layout.digits(f);
            let li = layout.index_of(&d, &self.left_positions);
            let ri = layout.index_of(&d, &self.right_positions);
            *slot = self
                .coefficients
                .iter()
                .zip(self.left_basis.iter().zip(&self.right_basis))
                .map(|(&c, (l, r))| l[li] * r[ri] * c)
                .sum::<C64>();
        }
        out
    }

    /// True when two coefficients coincide within `tol` (the decomposition
    /// is then not unique).
    pub fn has_degenerate_coefficients(&self, tol: f64) -> bool {
        self.coefficients.windows(2).any(|w| (w[0] - w[1]).abs() < tol)
    }
}

/// Schmidt decomposition of `psi` across `(left, right)` label sets.
pub fn schmidt<S: AsRef<str>>(
    psi: &PureState,
    left: &[S],
    right: &[S],
) -> Result<SchmidtDecomposition, HilbertError> {
    let layout = psi.layout();
    let bad = |m: String| HilbertError::BadBipartition(m);
    if left.is_empty() || right.is_empty() {
        return Err(bad("both sides must be non-empty".into()));
    }
    let lp = layout.positions_of(left).map_err(|e| bad(e.to_string()))?;
    let rp = layout.positions_of(right).map_err(|e| bad(e.to_string()))?;
    if lp.iter().any(|p| rp.contains(p)) {
        return Err(bad("sides overlap".into()));
    }
    if lp.len() + rp.len() != layout.factors().len() {
        return Err(bad("sides do not cover every factor".into()));
    }
    let m = amplitude_matrix(layout, psi.amplitudes(), &lp, &rp);
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut coefficients = Vec::new();
    let mut left_basis = Vec::new();
    let mut right_basis = Vec::new();
    for i in order {
        let s = svd.singular_values[i];
        if s <= RANK_FLOOR {
            continue;
        }
        coefficients.push(s);
        left_basis.push(u.column(i).into_owned());
        right_basis.push(v_t.row(i).transpose());
    }
    Ok(SchmidtDecomposition {
        coefficients,
        left_basis,
        right_basis,
        left_layout: layout.sublayout(&lp),
        right_layout: layout.sublayout(&rp),
        source_layout: layout.clone(),
        left_positions: lp,
        right_positions: rp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{tensor, SpaceLayout};
    use crate::random;
    use rand::SeedableRng;

    #[test]
    fn product_state_rank_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let a = random::haar_state(SpaceLayout::single("a", 3).unwrap(), &mut rng);
        let b = random::haar_state(SpaceLayout::single("b", 2).unwrap(), &mut rng);
        let p = tensor(&[&a, &b]).unwrap();
        let s = schmidt(&p, &["a"], &["b"]).unwrap();
        assert_eq!(s.rank(), 1);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singlet_coefficients() {
        let l = SpaceLayout::new([("one", 2), ("two", 2)]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let psi = PureState::from_slice(l, &[z, C64::new(h, 0.0), C64::new(-h, 0.0), z]).unwrap();
        let s = schmidt(&psi, &["one"], &["two"]).unwrap();
        assert_eq!(s.rank(), 2);
        for c in &s.coefficients {
            assert!((c - h).abs() < 1e-14);
        }
        assert!(s.has_degenerate_coefficients(1e-12));
        assert!((s.reconstruct() - psi.amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn non_partition_rejected() {
        let psi = PureState::basis(SpaceLayout::qubits("q", 3).unwrap(), 0).unwrap();
        for (l, r) in [(vec!["q0"], vec!["q1"]), (vec!["q0", "q1"], vec!["q1", "q2"]), (vec!["q0"], vec!["x", "q1", "q2"])] {
            assert!(matches!(schmidt(&psi, &l, &r), Err(HilbertError::BadBipartition(_))));
        }
    }

    #[test]
    fn interleaved_bipartition_reconstructs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let psi = random::haar_state(SpaceLayout::new([("a", 2), ("b", 3), ("c", 2)]).unwrap(), &mut rng);
        let s = schmidt(&psi, &["c", "a"], &["b"]).unwrap();
        assert!((s.reconstruct() - psi.amplitudes()).norm() < 1e-12);
        assert_eq!(s.left_layout.header(), "a:2,c:2");
    }
}
