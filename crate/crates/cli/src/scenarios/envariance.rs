use declab_core::envariance::{self, to_f64};
use serde::Deserialize;

use super::{err, params, parse_params};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{num, Artifacts, CsvTable};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    /// Squared Schmidt coefficients as `m/M` strings.
    weights: Vec<String>,
    /// Schmidt phases in radians; zero when empty.
    phases: Vec<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self { weights: vec!["1/3".into(), "2/3".into()], phases: Vec::new() }
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    match envariance::parse_weights(&p.weights) {
        Ok(w) => {
            require(&mut out, !w.is_empty(), "weights", "must not be empty");
            let sum = envariance::weight_sum(&w);
            require(&mut out, w.is_empty() || sum == Some(envariance::Weight::from_integer(1)), "weights", "must sum to 1");
            require(&mut out, w.iter().all(|x| *x.numer() > 0), "weights", "must be positive");
        }
        Err(e) => out.push(Violation::new("params.weights", e.to_string())),
    }
    require(&mut out, p.phases.is_empty() || p.phases.len() == p.weights.len(), "phases", "must match the number of weights");
    require(&mut out, p.phases.iter().all(|x| x.is_finite()), "phases", "must be finite");
    out
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let weights = envariance::parse_weights(&p.weights).map_err(err)?;
    let phases = if p.phases.is_empty() { vec![0.0; weights.len()] } else { p.phases.clone() };
    let fg = envariance::fine_grain_with_phases(&weights, &phases).map_err(err)?;

    let mut probs = CsvTable::new(
        "probabilities",
        "dimensionless",
        &["outcome", "weight", "multiplicity", "probability", "probability_value"],
    );
    for (k, (w, (m, pr))) in weights.iter().zip(fg.multiplicities.iter().zip(&fg.probabilities)).enumerate() {
        probs.push(vec![k.to_string(), w.to_string(), m.to_string(), pr.to_string(), num(to_f64(pr))]);
    }

    let mut trace = CsvTable::new(
        "derivation",
        "residuals dimensionless",
        &["step", "assumptions", "pairs_checked", "max_residual", "worst_i", "worst_j"],
    );
    for s in &fg.derivation.trace {
        trace.push(vec![
            s.step.name().into(),
            format!("\"{}\"", s.step.assumptions()),
            s.pairs_checked.to_string(),
            num(s.max_residual),
            s.worst_pair.0.to_string(),
            s.worst_pair.1.to_string(),
        ]);
    }

    let mut out = Artifacts { tables: vec![probs, trace], ..Default::default() };
    out.note("denominator", fg.denominator);
    Ok(out)
}
