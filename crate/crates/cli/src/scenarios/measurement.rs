use declab_core::hilbert::{self, PureState, SpaceLayout};
use declab_core::linalg::CVector;
use declab_core::measurement::{self, MeasurementSetup, SetupManifest};
use declab_core::C64;
use serde::Deserialize;

use super::{err, params, parse_params};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{complex, num, Artifacts, CsvTable};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    /// Setup manifest; a standard-basis setup of matching dimension otherwise.
    manifest: Option<String>,
    /// System amplitudes as `[re, im]`, normalized on load.
    amplitudes: Vec<[f64; 2]>,
    environment: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self { manifest: None, amplitudes: vec![[0.6, 0.0], [0.0, 0.8]], environment: true }
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    require(&mut out, (2..=64).contains(&p.amplitudes.len()), "amplitudes", "need 2..=64 amplitudes");
    require(&mut out, p.amplitudes.iter().flatten().all(|x| x.is_finite()), "amplitudes", "must be finite");
    require(&mut out, p.amplitudes.iter().any(|[re, im]| *re != 0.0 || *im != 0.0), "amplitudes", "must not all vanish");
    if let Some(m) = &p.manifest {
        if let Err(e) = std::fs::read_to_string(cfg.resolve(m)).map_err(err).and_then(|t| SetupManifest::parse(&t).map_err(err)) {
            out.push(Violation::new("params.manifest", e));
        }
    }
    out
}

fn basis(n: usize) -> Vec<CVector> {
    (0..n).map(|i| CVector::from_fn(n, |k, _| C64::new(if k == i { 1.0 } else { 0.0 }, 0.0))).collect()
}

fn standard_setup(n: usize, environment: bool) -> Result<MeasurementSetup, String> {
    let l = |name: &str| SpaceLayout::single(name, n).map_err(err);
    let b = basis(n);
    let setup = MeasurementSetup::new(l("S")?, b.clone(), l("A")?, b[0].clone(), b.clone()).map_err(err)?;
    if environment {
        setup.with_environment(l("E")?, b[0].clone(), b).map_err(err)
    } else {
        Ok(setup)
    }
}

fn density_rows(table: &mut CsvTable, name: &str, m: &declab_core::linalg::CMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let mut row = vec![name.to_string(), i.to_string(), j.to_string()];
            row.extend(complex(m[(i, j)]));
            table.push(row);
        }
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let setup = match &p.manifest {
        Some(m) => SetupManifest::load(&cfg.resolve(m)).map_err(err)?,
        None => standard_setup(p.amplitudes.len(), p.environment)?,
    };
    let amps: Vec<C64> = p.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
    let system = PureState::normalized(setup.system_layout.clone(), CVector::from_vec(amps)).map_err(err)?;

    let sa = measurement::premeasure(&system, &setup).map_err(err)?;
    let s_labels: Vec<String> = setup.system_layout.labels().map(String::from).collect();
    let a_labels: Vec<String> = setup.apparatus_layout.labels().map(String::from).collect();
    let dec = hilbert::schmidt(&sa, &s_labels, &a_labels).map_err(err)?;
    let mut schmidt = CsvTable::new("schmidt", "dimensionless", &["n", "coefficient"]);
    for (n, c) in dec.coefficients.iter().enumerate() {
        schmidt.push(vec![n.to_string(), num(*c)]);
    }

    let mut reduced = CsvTable::new("reduced", "dimensionless", &["state", "i", "j", "re", "im"]);
    density_rows(&mut reduced, "system_after_premeasurement", sa.reduced(&s_labels).map_err(err)?.matrix());
    if setup.environment.is_some() {
        let full = measurement::chain(&system, &setup).map_err(err)?;
        let keep: Vec<String> = s_labels.iter().chain(&a_labels).cloned().collect();
        density_rows(&mut reduced, "system_apparatus_after_chain", full.reduced(&keep).map_err(err)?.matrix());
    }

    let mut out = Artifacts { tables: vec![schmidt, reduced], ..Default::default() };
    out.note("schmidt_rank", dec.coefficients.iter().filter(|c| **c > 1e-12).count());
    Ok(out)
}
