//! Von Neumann premeasurement, the system-apparatus-environment chain and
//! basis rewrites of bipartite states.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::hilbert::{self, HilbertError, Propagator, PureState, SpaceLayout};
use crate::linalg::{CMatrix, CVector};
use crate::C64;

const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("invalid measurement setup: {0}")]
    InvalidSetup(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("setup has no environment records")]
    MissingEnvironment,
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

/// Largest deviation of the Gram matrix of `vectors` from the identity.
pub fn orthonormality_residual(vectors: &[CVector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dotc(b) - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Extends an orthonormal family to a basis of `C^dim` by Gram–Schmidt over
/// the standard basis vectors, taken in index order.
pub fn complete_basis(vectors: &[CVector], dim: usize) -> Vec<CVector> {
    let mut out: Vec<CVector> = vectors.to_vec();
    for k in 0..dim {
        if out.len() == dim {
            break;
        }
        let mut v = CVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        // two passes keep the result orthogonal to rounding level
        for _ in 0..2 {
            for u in &out {
                let proj = u.dotc(&v);
                v -= u * proj;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            out.push(v.unscale(n));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EnvironmentRecords {
    pub layout: SpaceLayout,
    pub ready: CVector,
    /// `|e_n⟩`, normalized; need not be mutually orthogonal.
    pub records: Vec<CVector>,
}

/// System basis `{|s_n⟩}`, apparatus ready state `|a_r⟩`, pointer states
/// `{|a_n⟩}` and optional environment `|e_0⟩`, `{|e_n⟩}`.
#[derive(Debug, Clone)]
pub struct MeasurementSetup {
    pub system_layout: SpaceLayout,
    pub apparatus_layout: SpaceLayout,
    pub system_basis: Vec<CVector>,
    pub ready: CVector,
    pub pointers: Vec<CVector>,
    pub environment: Option<EnvironmentRecords>,
}

fn check_len(v: &CVector, layout: &SpaceLayout, what: &str) -> Result<(), MeasurementError> {
    if v.len() != layout.dim() {
        return Err(MeasurementError::InvalidSetup(format!(
            "{what} has {} amplitudes, space `{layout}` has dimension {}",
            v.len(),
            layout.dim()
        )));
    }
    Ok(())
}

fn check_unit(v: &CVector, what: &str) -> Result<(), MeasurementError> {
    if (v.norm() - 1.0).abs() > BASIS_TOL {
        return Err(MeasurementError::InvalidSetup(format!("{what} is not normalized")));
    }
    Ok(())
}

impl MeasurementSetup {
    pub fn new(
        system_layout: SpaceLayout,
        system_basis: Vec<CVector>,
        apparatus_layout: SpaceLayout,
        ready: CVector,
        pointers: Vec<CVector>,
    ) -> Result<Self, MeasurementError> {
        system_layout.join(&apparatus_layout)?;
        for v in &system_basis {
            check_len(v, &system_layout, "system basis vector")?;
        }
        for v in pointers.iter().chain(std::iter::once(&ready)) {
            check_len(v, &apparatus_layout, "apparatus vector")?;
        }
        if system_basis.len() != system_layout.dim() {
            return Err(MeasurementError::InvalidSetup(format!(
                "system basis has {} vectors for dimension {}",
                system_basis.len(),
                system_layout.dim()
            )));
        }
        if pointers.len() != system_basis.len() {
            return Err(MeasurementError::InvalidSetup(format!(
                "{} pointer states for {} system basis states",
                pointers.len(),
                system_basis.len()
            )));
        }
        let r = orthonormality_residual(&system_basis);
        if r > BASIS_TOL {
            return Err(MeasurementError::InvalidSetup(format!("system basis not orthonormal ({r:e})")));
        }
        let r = orthonormality_residual(&pointers);
        if r > BASIS_TOL {
            return Err(MeasurementError::InvalidSetup(format!("pointer states not orthonormal ({r:e})")));
        }
        check_unit(&ready, "ready state")?;
        Ok(Self { system_layout, apparatus_layout, system_basis, ready, pointers, environment: None })
    }

    pub fn with_environment(
        mut self,
        layout: SpaceLayout,
        ready: CVector,
        records: Vec<CVector>,
    ) -> Result<Self, MeasurementError> {
        self.system_layout.join(&self.apparatus_layout)?.join(&layout)?;
        check_len(&ready, &layout, "environment ready state")?;
        check_unit(&ready, "environment ready state")?;
        if records.len() != self.pointers.len() {
            return Err(MeasurementError::InvalidSetup(format!(
                "{} environment records for {} pointer states",
                records.len(),
                self.pointers.len()
            )));
        }
        for r in &records {
            check_len(r, &layout, "environment record")?;
            check_unit(r, "environment record")?;
        }
        self.environment = Some(EnvironmentRecords { layout, ready, records });
        Ok(self)
    }

    pub fn joint_layout(&self) -> SpaceLayout {
        self.system_layout.join(&self.apparatus_layout).expect("checked at construction")
    }

    pub fn chain_layout(&self) -> Result<SpaceLayout, MeasurementError> {
        let env = self.environment.as_ref().ok_or(MeasurementError::MissingEnvironment)?;
        Ok(self.joint_layout().join(&env.layout)?)
    }
}

/// Unitary sending each orthonormal `domain[n]` to `image[n]`, completed on
/// the orthogonal complements.
fn unitary_from_pairs(domain: &[CVector], image: &[CVector], dim: usize) -> CMatrix {
    let d = complete_basis(domain, dim);
    let r = complete_basis(image, dim);
    let mut u = CMatrix::zeros(dim, dim);
    for (dj, rj) in d.iter().zip(&r) {
        u += rj * dj.adjoint();
    }
    u
}

/// `U |s_n⟩|a_r⟩ = |s_n⟩|a_n⟩` on `S ⊗ A`.
pub fn premeasurement_unitary(setup: &MeasurementSetup) -> Result<Propagator, MeasurementError> {
    let layout = setup.joint_layout();
    let domain: Vec<CVector> = setup.system_basis.iter().map(|s| s.kronecker(&setup.ready)).collect();
    let image: Vec<CVector> = setup
        .system_basis
        .iter()
        .zip(&setup.pointers)
        .map(|(s, a)| s.kronecker(a))
        .collect();
    let u = unitary_from_pairs(&domain, &image, layout.dim());
    Ok(Propagator::from_unitary(layout, u)?)
}

/// `I_S ⊗ V` with `V |a_n⟩|e_0⟩ = |a_n⟩|e_n⟩` on `S ⊗ A ⊗ E`.
pub fn record_unitary(setup: &MeasurementSetup) -> Result<Propagator, MeasurementError> {
    let env = setup.environment.as_ref().ok_or(MeasurementError::MissingEnvironment)?;
    let ae_dim = setup.apparatus_layout.dim() * env.layout.dim();
    let domain: Vec<CVector> = setup.pointers.iter().map(|a| a.kronecker(&env.ready)).collect();
    let image: Vec<CVector> = setup
        .pointers
        .iter()
        .zip(&env.records)
        .map(|(a, e)| a.kronecker(e))
        .collect();
    let v = unitary_from_pairs(&domain, &image, ae_dim);
    let full = CMatrix::identity(setup.system_layout.dim(), setup.system_layout.dim()).kronecker(&v);
    Ok(Propagator::from_unitary(setup.chain_layout()?, full)?)
}

fn check_system(system: &PureState, setup: &MeasurementSetup) -> Result<(), MeasurementError> {
    if system.layout() != &setup.system_layout {
        return Err(MeasurementError::Hilbert(HilbertError::LayoutMismatch(format!(
            "system state on `{}`, setup expects `{}`",
            system.layout(),
            setup.system_layout
        ))));
    }
    Ok(())
}

/// `Σ c_n |s_n⟩|a_r⟩ ↦ Σ c_n |s_n⟩|a_n⟩`.
pub fn premeasure(system: &PureState, setup: &MeasurementSetup) -> Result<PureState, MeasurementError> {
    check_system(system, setup)?;
    let ready = PureState::new(setup.apparatus_layout.clone(), setup.ready.clone())?;
    let start = hilbert::tensor(&[system, &ready])?;
    Ok(premeasurement_unitary(setup)?.apply_pure(&start)?)
}

/// Premeasurement followed by the apparatus-environment record step:
/// `Σ c_n |s_n⟩|a_r⟩|e_0⟩ ↦ Σ c_n |s_n⟩|a_n⟩|e_0⟩ ↦ Σ c_n |s_n⟩|a_n⟩|e_n⟩`.
pub fn chain(system: &PureState, setup: &MeasurementSetup) -> Result<PureState, MeasurementError> {
    check_system(system, setup)?;
    let env = setup.environment.as_ref().ok_or(MeasurementError::MissingEnvironment)?;
    let after_first = premeasure(system, setup)?;
    let e0 = PureState::new(env.layout.clone(), env.ready.clone())?;
    let joint = hilbert::tensor(&[&after_first, &e0])?;
    Ok(record_unitary(setup)?.apply_pure(&joint)?)
}

/// `ψ = Σ_n c'_n |s'_n⟩|a'_n⟩` for a prescribed basis `{|s'_n⟩}` of side 1.
#[derive(Debug, Clone)]
pub struct Rebasis {
    /// `c'_n = ‖(⟨s'_n| ⊗ I)ψ‖`.
    pub coefficients: Vec<f64>,
    pub basis: Vec<CVector>,
    /// Normalized partners; `None` where `c'_n` vanishes.
    pub partners: Vec<Option<CVector>>,
    /// Partners with nonzero weight are mutually orthogonal (the rewrite is a
    /// Schmidt decomposition).
    pub orthogonal_partners: bool,
    /// The state has repeated nonzero Schmidt coefficients, so orthogonal
    /// partners do not single out one basis.
    pub non_unique: bool,
    layout: SpaceLayout,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Rebasis {
    /// `Σ c'_n |s'_n⟩|a'_n⟩` in the amplitude order of the source layout.
    pub fn reconstruct(&self) -> CVector {
        let mut out = CVector::zeros(self.layout.dim());
        for (f, slot) in out.iter_mut().enumerate() {
            let d = self.layout.digits(f);
            let li = self.layout.index_of(&d, &self.left);
            let ri = self.layout.index_of(&d, &self.right);
            for ((c, s), a) in self.coefficients.iter().zip(&self.basis).zip(&self.partners) {
                if let Some(a) = a {
                    *slot += s[li] * a[ri] * *c;
                }
            }
        }
        out
    }

    /// Largest `|⟨a'_m|a'_n⟩|`, `m ≠ n`, over partners with nonzero weight.
    pub fn max_partner_overlap(&self) -> f64 {
        let live: Vec<&CVector> = self.partners.iter().flatten().collect();
        let mut worst = 0.0f64;
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                worst = worst.max(live[i].dotc(live[j]).norm());
            }
        }
        worst
    }
}

const ZERO_WEIGHT: f64 = 1e-12;

pub fn rebasis<S: AsRef<str>>(
    psi: &PureState,
    left: &[S],
    right: &[S],
    new_basis: &[CVector],
) -> Result<Rebasis, MeasurementError> {
    let schmidt = hilbert::schmidt(psi, left, right)?;
    let layout = psi.layout().clone();
    let lp = layout.positions_of(left)?;
    let rp = layout.positions_of(right)?;
    let d1 = layout.sublayout(&lp).dim();
    if new_basis.len() != d1 || new_basis.iter().any(|v| v.len() != d1) {
        return Err(MeasurementError::InvalidBasis(format!(
            "need {d1} vectors of length {d1} for side 1"
        )));
    }
    let r = orthonormality_residual(new_basis);
    if r > BASIS_TOL {
        return Err(MeasurementError::InvalidBasis(format!("not orthonormal ({r:e})")));
    }
    let m = hilbert::amplitude_matrix(&layout, psi.amplitudes(), &lp, &rp);
    let mut coefficients = Vec::with_capacity(d1);
    let mut partners = Vec::with_capacity(d1);
    for s in new_basis {
        let raw: CVector = m.transpose() * s.conjugate();
        let c = raw.norm();
        coefficients.push(c);
        partners.push((c > ZERO_WEIGHT).then(|| raw.unscale(c)));
    }
    let mut out = Rebasis {
        coefficients,
        basis: new_basis.to_vec(),
        partners,
        orthogonal_partners: false,
        non_unique: schmidt.has_degenerate_coefficients(BASIS_TOL),
        layout,
        left: lp,
        right: rp,
    };
    out.orthogonal_partners = out.max_partner_overlap() < BASIS_TOL;
    Ok(out)
}

/// File manifest describing a [`MeasurementSetup`]; every entry names a
/// state file in the textual matrix format, relative to the manifest.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SetupManifest {
    pub system_basis: Vec<String>,
    pub ready_state: String,
    pub pointer_states: Vec<String>,
    pub environment_ready: Option<String>,
    #[serde(default)]
    pub environment_records: Vec<String>,
}

impl SetupManifest {
    pub fn parse(text: &str) -> Result<Self, MeasurementError> {
        let m: SetupManifest = toml::from_str(text).map_err(|e| MeasurementError::Manifest(e.to_string()))?;
        if m.environment_ready.is_some() != !m.environment_records.is_empty() {
            return Err(MeasurementError::Manifest(
                "environment_ready and environment_records must be given together".into(),
            ));
        }
        Ok(m)
    }

    /// Builds the setup, reading each state through `read`.
    pub fn resolve<F>(&self, mut read: F) -> Result<MeasurementSetup, MeasurementError>
    where
        F: FnMut(&str) -> Result<String, MeasurementError>,
    {
        let mut load = |name: &str| -> Result<PureState, MeasurementError> {
            Ok(PureState::from_text(&read(name)?)?)
        };
        let family = |states: Vec<PureState>, what: &str| -> Result<(SpaceLayout, Vec<CVector>), MeasurementError> {
            let layout = states
                .first()
                .map(|s| s.layout().clone())
                .ok_or_else(|| MeasurementError::Manifest(format!("{what} list is empty")))?;
            if states.iter().any(|s| s.layout() != &layout) {
                return Err(MeasurementError::Manifest(format!("{what} files disagree on layout")));
            }
            Ok((layout, states.into_iter().map(PureState::into_amplitudes).collect()))
        };
        let sys = self.system_basis.iter().map(|n| load(n)).collect::<Result<Vec<_>, _>>()?;
        let (s_layout, s_vecs) = family(sys, "system_basis")?;
        let ptr = self.pointer_states.iter().map(|n| load(n)).collect::<Result<Vec<_>, _>>()?;
        let (a_layout, a_vecs) = family(ptr, "pointer_states")?;
        let ready = load(&self.ready_state)?;
        if ready.layout() != &a_layout {
            return Err(MeasurementError::Manifest("ready state layout differs from pointer states".into()));
        }
        let mut setup = MeasurementSetup::new(s_layout, s_vecs, a_layout, ready.into_amplitudes(), a_vecs)?;
        if let Some(e0) = &self.environment_ready {
            let e0 = load(e0)?;
            let recs = self.environment_records.iter().map(|n| load(n)).collect::<Result<Vec<_>, _>>()?;
            let (e_layout, e_vecs) = family(recs, "environment_records")?;
            if e0.layout() != &e_layout {
                return Err(MeasurementError::Manifest("environment_ready layout differs from records".into()));
            }
            setup = setup.with_environment(e_layout, e0.into_amplitudes(), e_vecs)?;
        }
        Ok(setup)
    }

    pub fn load(path: &Path) -> Result<MeasurementSetup, MeasurementError> {
        let io = |p: &Path, source| MeasurementError::Io { path: p.to_path_buf(), source };
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let manifest = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.resolve(|name| {
            let p = base.join(name);
            std::fs::read_to_string(&p).map_err(|e| io(&p, e))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::partial_trace;
    use crate::linalg::max_abs_diff;
    use std::f64::consts::FRAC_1_SQRT_2 as H;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn e(dim: usize, i: usize) -> CVector {
        let mut v = CVector::zeros(dim);
        v[i] = c(1.0, 0.0);
        v
    }

    fn qubit_setup() -> MeasurementSetup {
        MeasurementSetup::new(
            SpaceLayout::single("S", 2).unwrap(),
            vec![e(2, 0), e(2, 1)],
            SpaceLayout::single("A", 3).unwrap(),
            e(3, 2),
            vec![e(3, 0), e(3, 1)],
        )
        .unwrap()
    }

    #[test]
    fn eigenstate_gives_product() {
        let setup = qubit_setup();
        let s2 = PureState::basis(setup.system_layout.clone(), 1).unwrap();
        let out = premeasure(&s2, &setup).unwrap();
        let expected = e(2, 1).kronecker(&e(3, 1));
        assert!((out.amplitudes() - expected).norm() < 1e-14);
    }

    #[test]
    fn superposition_correlates() {
        let setup = qubit_setup();
        let psi = PureState::from_slice(setup.system_layout.clone(), &[c(H, 0.0), c(H, 0.0)]).unwrap();
        let out = premeasure(&psi, &setup).unwrap();
        let expected = (e(2, 0).kronecker(&e(3, 0)) + e(2, 1).kronecker(&e(3, 1))).scale(H);
        assert!((out.amplitudes() - expected).norm() < 1e-14);
    }

    #[test]
    fn non_orthonormal_setup_rejected() {
        let bad = MeasurementSetup::new(
            SpaceLayout::single("S", 2).unwrap(),
            vec![e(2, 0), (e(2, 0) + e(2, 1)).scale(H)],
            SpaceLayout::single("A", 2).unwrap(),
            e(2, 0),
            vec![e(2, 0), e(2, 1)],
        );
        assert!(matches!(bad, Err(MeasurementError::InvalidSetup(_))));
    }

    #[test]
    fn chain_with_overlapping_records() {
        let overlap = 0.3f64;
        let e1 = e(2, 0);
        let e2 = CVector::from_vec(vec![c(overlap, 0.0), c((1.0 - overlap * overlap).sqrt(), 0.0)]);
        let setup = qubit_setup()
            .with_environment(SpaceLayout::single("E", 2).unwrap(), e(2, 1), vec![e1, e2])
            .unwrap();
        let (c1, c2) = (c(0.6, 0.0), c(0.0, 0.8));
        let psi = PureState::from_slice(setup.system_layout.clone(), &[c1, c2]).unwrap();
        let out = chain(&psi, &setup).unwrap();
        assert!((out.amplitudes().norm() - 1.0).abs() < 1e-12);
        let rho_sa = out.reduced(&["S", "A"]).unwrap();
        // |s1 a1⟩ is index 0, |s2 a2⟩ is index 1*3+1 = 4
        let off = rho_sa.matrix()[(0, 4)];
        assert!((off - c1 * c2.conj() * overlap).norm() < 1e-12);
        // orthogonal records: diagonal
        let setup2 = qubit_setup()
            .with_environment(SpaceLayout::single("E", 2).unwrap(), e(2, 0), vec![e(2, 0), e(2, 1)])
            .unwrap();
        let out2 = chain(&psi, &setup2).unwrap();
        let full = partial_trace(&out2.density(), &["S", "A"]).unwrap();
        let mut diag = full.matrix().clone();
        diag.fill_lower_triangle(c(0.0, 0.0), 1);
        diag.fill_upper_triangle(c(0.0, 0.0), 1);
        assert!(max_abs_diff(full.matrix(), &diag) < 1e-12);
    }

    #[test]
    fn chain_needs_environment() {
        let setup = qubit_setup();
        let psi = PureState::basis(setup.system_layout.clone(), 0).unwrap();
        assert!(matches!(chain(&psi, &setup), Err(MeasurementError::MissingEnvironment)));
    }

    #[test]
    fn singlet_in_x_basis() {
        let l = SpaceLayout::new([("one", 2), ("two", 2)]).unwrap();
        let psi = PureState::from_slice(l, &[c(0.0, 0.0), c(H, 0.0), c(-H, 0.0), c(0.0, 0.0)]).unwrap();
        let xp = CVector::from_vec(vec![c(H, 0.0), c(H, 0.0)]);
        let xm = CVector::from_vec(vec![c(H, 0.0), c(-H, 0.0)]);
        let r = rebasis(&psi, &["one"], &["two"], &[xp.clone(), xm.clone()]).unwrap();
        assert!(r.orthogonal_partners);
        assert!(r.non_unique);
        for coef in &r.coefficients {
            assert!((coef - H).abs() < 1e-14);
        }
        // partner of |x+⟩ is ∝ |x−⟩ and vice versa
        assert!((r.partners[0].as_ref().unwrap().dotc(&xm).norm() - 1.0).abs() < 1e-14);
        assert!((r.partners[1].as_ref().unwrap().dotc(&xp).norm() - 1.0).abs() < 1e-14);
        // relative sign: (|x+⟩|x−⟩ − |x−⟩|x+⟩)/√2
        let ph0 = r.partners[0].as_ref().unwrap().dotc(&xm);
        let ph1 = r.partners[1].as_ref().unwrap().dotc(&xp);
        assert!((ph0 / ph1 + c(1.0, 0.0)).norm() < 1e-14);
        assert!((r.reconstruct() - psi.amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn product_partners_all_parallel() {
        let l = SpaceLayout::new([("one", 2), ("two", 2)]).unwrap();
        let psi = PureState::from_slice(l, &[c(0.6, 0.0), c(0.0, 0.0), c(0.8, 0.0), c(0.0, 0.0)]).unwrap();
        let xp = CVector::from_vec(vec![c(H, 0.0), c(H, 0.0)]);
        let xm = CVector::from_vec(vec![c(H, 0.0), c(-H, 0.0)]);
        let r = rebasis(&psi, &["one"], &["two"], &[xp, xm]).unwrap();
        let a0 = r.partners[0].as_ref().unwrap();
        let a1 = r.partners[1].as_ref().unwrap();
        assert!((a0.dotc(a1).norm() - 1.0).abs() < 1e-12);
        assert!(!r.orthogonal_partners);
    }

    #[test]
    fn rebasis_rejects_bad_basis() {
        let l = SpaceLayout::new([("one", 2), ("two", 2)]).unwrap();
        let psi = PureState::basis(l, 0).unwrap();
        let err = rebasis(&psi, &["one"], &["two"], &[e(2, 0), e(2, 0)]).unwrap_err();
        assert!(matches!(err, MeasurementError::InvalidBasis(_)));
    }

    #[test]
    fn manifest_environment_pairing() {
        let ok = "system_basis = [\"s0\", \"s1\"]\nready_state = \"r\"\npointer_states = [\"a0\", \"a1\"]\n";
        assert!(SetupManifest::parse(ok).is_ok());
        let half = format!("{ok}environment_ready = \"e0\"\n");
        assert!(SetupManifest::parse(&half).is_err());
        assert!(SetupManifest::parse("bogus = 1").is_err());
    }

    #[test]
    fn manifest_resolves_in_memory() {
        let files: std::collections::HashMap<&str, String> = [
            ("s0", PureState::basis(SpaceLayout::single("S", 2).unwrap(), 0).unwrap().to_text()),
            ("s1", PureState::basis(SpaceLayout::single("S", 2).unwrap(), 1).unwrap().to_text()),
            ("a0", PureState::basis(SpaceLayout::single("A", 2).unwrap(), 0).unwrap().to_text()),
            ("a1", PureState::basis(SpaceLayout::single("A", 2).unwrap(), 1).unwrap().to_text()),
        ]
        .into_iter()
        .collect();
        let m = SetupManifest::parse("system_basis = [\"s0\", \"s1\"]\nready_state = \"a0\"\npointer_states = [\"a0\", \"a1\"]\n").unwrap();
        let setup = m
            .resolve(|n| files.get(n).cloned().ok_or_else(|| MeasurementError::Manifest(format!("no {n}"))))
            .unwrap();
        assert_eq!(setup.joint_layout().header(), "S:2,A:2");
    }
}
