use declab_core::einselection::{self, Environment, InteractionSpec, DEFAULT_REGIME_THRESHOLDS};
use declab_core::hilbert::Observable;
use declab_core::random;
use declab_core::spinbath::{self, SpinBathParams, MAX_DENSE_ENV};
use rayon::prelude::*;
use serde::Deserialize;

use super::{err, params, parse_params, require_seed, seed};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{num, Artifacts, CsvTable};

const CANDIDATES: [&str; 4] = ["up", "down", "plus", "minus"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    n: usize,
    t_max: f64,
    samples: usize,
    commutator_tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self { n: 6, t_max: 3.0, samples: 31, commutator_tol: 1e-12 }
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    require_seed(cfg, &mut out);
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    require(&mut out, (1..=MAX_DENSE_ENV).contains(&p.n), "n", "must be in 1..=9 (dense evolution)");
    require(&mut out, p.t_max > 0.0 && p.t_max.is_finite(), "t_max", "must be positive");
    require(&mut out, (1..=10_000).contains(&p.samples), "samples", "must be in 1..=10000");
    require(&mut out, p.commutator_tol > 0.0, "commutator_tol", "must be positive");
    out
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let bath = SpinBathParams::random(p.n, &mut random::stream(seed(cfg)?, 0)).map_err(err)?;
    let spec = InteractionSpec::spin_bath(&bath).map_err(err)?;
    let env = Environment::Pure(spinbath::environment_state(&bath));
    let cands = einselection::spin_candidates();

    let projectors: Vec<Observable> = cands[..2].iter().map(Observable::projector).collect();
    let report = einselection::commutes(&projectors, spec.h_int(), p.commutator_tol).map_err(err)?;
    let mut comm = CsvTable::new("commutation", "operator norm, units of the coupling scale", &["projector", "commutator_norm", "pass"]);
    for (name, n) in CANDIDATES.iter().zip(&report.norms) {
        comm.push(vec![name.to_string(), num(*n), (*n <= report.tol).to_string()]);
    }

    let times: Vec<f64> = if p.samples == 1 {
        vec![p.t_max]
    } else {
        (0..p.samples).map(|i| p.t_max * i as f64 / (p.samples - 1) as f64).collect()
    };
    let reports: Vec<_> = times
        .par_iter()
        .map(|&t| einselection::predictability_sieve(&spec, &env, &cands, t).map_err(err))
        .collect::<Result<_, _>>()?;
    let mut sieve = CsvTable::new(
        "sieve",
        "t in units of 1/g; purity dimensionless; entropy in nats",
        &["t", "z_abs", "candidate", "rank", "purity", "entropy"],
    );
    for r in &reports {
        let z = spinbath::z_analytic(&bath, r.time).norm();
        for (rank, e) in r.entries.iter().enumerate() {
            sieve.push(vec![num(r.time), num(z), CANDIDATES[e.index].into(), rank.to_string(), num(e.purity), num(e.entropy)]);
        }
    }

    let regime = einselection::classify_regime(&spec, DEFAULT_REGIME_THRESHOLDS).map_err(err)?;
    let mut out = Artifacts { tables: vec![comm, sieve], ..Default::default() };
    out.note("regime", regime.name());
    out.note("commutativity_pass", report.pass);
    Ok(out)
}
