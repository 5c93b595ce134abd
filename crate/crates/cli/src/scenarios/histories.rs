use declab_core::hilbert::{Observable, Propagator, SpaceLayout};
use declab_core::histories::{
    self, ConsistencyMode, HistoriesManifest, HistoriesProblem, HistorySpace, Picture, ProjectorFamily, DEFAULT_CONSISTENCY_TOL,
    MAX_PROJECTORS, MAX_TIMES,
};
use declab_core::{linalg, random};
use serde::Deserialize;

use super::{err, params, parse_params, require_seed, seed};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{complex, num, Artifacts, CsvTable};

/// Largest number of fine-grained histories written out in full.
const MAX_HISTORIES: usize = 512;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    /// Manifest file; when absent a random problem is generated from the seed.
    manifest: Option<String>,
    dims: Vec<usize>,
    times: Vec<f64>,
    /// `eigen` (evolved eigenprojectors of ρ0) or `computational`.
    families: String,
    picture: String,
    tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            manifest: None,
            dims: vec![2, 3],
            times: vec![0.3, 0.9, 1.4],
            families: "eigen".into(),
            picture: "schrodinger".into(),
            tol: DEFAULT_CONSISTENCY_TOL,
        }
    }
}

fn picture(name: &str) -> Option<Picture> {
    match name {
        "schrodinger" => Some(Picture::Schrodinger),
        "heisenberg" => Some(Picture::Heisenberg),
        _ => None,
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    require(&mut out, picture(&p.picture).is_some(), "picture", "must be `schrodinger` or `heisenberg`");
    require(&mut out, p.tol > 0.0, "tol", "must be positive");
    if let Some(m) = &p.manifest {
        match std::fs::read_to_string(cfg.resolve(m)) {
            Ok(text) => {
                if let Err(e) = HistoriesManifest::parse(&text) {
                    out.push(Violation::new("params.manifest", e.to_string()));
                }
            }
            Err(e) => out.push(Violation::new("params.manifest", e.to_string())),
        }
        return out;
    }
    require_seed(cfg, &mut out);
    let dim: usize = p.dims.iter().product();
    require(&mut out, !p.dims.is_empty() && p.dims.iter().all(|&d| d >= 2), "dims", "need at least one factor, each of dimension ≥ 2");
    require(&mut out, dim <= MAX_PROJECTORS, "dims", "total dimension must be at most 8");
    require(&mut out, (1..=MAX_TIMES).contains(&p.times.len()), "times", "need 1..=4 times");
    require(&mut out, p.times.windows(2).all(|w| w[0] < w[1]) && p.times.iter().all(|t| t.is_finite() && *t >= 0.0), "times", "must be finite, non-negative and increasing");
    require(&mut out, dim.checked_pow(p.times.len() as u32).is_some_and(|n| n <= MAX_HISTORIES), "times", "too many histories to tabulate");
    require(&mut out, matches!(p.families.as_str(), "eigen" | "computational"), "families", "must be `eigen` or `computational`");
    out
}

fn random_problem(cfg: &ScenarioConfig, p: &Params) -> Result<HistoriesProblem, String> {
    let mut rng = random::stream(seed(cfg)?, 0);
    let labels: Vec<String> = (0..p.dims.len()).map(|i| format!("q{i}")).collect();
    let layout = SpaceLayout::new(labels.iter().cloned().zip(p.dims.iter().copied())).map_err(err)?;
    let rho0 = random::random_density(layout.clone(), &mut rng);
    let h = random::random_hermitian(layout.clone(), &mut rng);
    let eig = linalg::spectral_projectors(rho0.matrix(), histories::DEGENERACY_GAP);
    let mut families = Vec::with_capacity(p.times.len());
    for &t in &p.times {
        families.push(if p.families == "eigen" {
            let u = Propagator::new(&h, t);
            let ps = eig
                .iter()
                .map(|(_, q)| Observable::new(layout.clone(), u.matrix() * q * u.matrix().adjoint()).map_err(err))
                .collect::<Result<_, _>>()?;
            ProjectorFamily::new(t, ps).map_err(err)?
        } else {
            ProjectorFamily::computational(t, &layout).map_err(err)?
        });
    }
    let space = HistorySpace::fixed(families).map_err(err)?;
    let propagators = histories::propagators_from_hamiltonian(&h, 0.0, &p.times);
    Ok(HistoriesProblem { space, rho0, propagators })
}

fn label(choices: &[usize]) -> String {
    choices.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-")
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let problem = match &p.manifest {
        Some(m) => HistoriesManifest::load(&cfg.resolve(m)).map_err(err)?,
        None => random_problem(cfg, &p)?,
    };
    let pic = picture(&p.picture).ok_or("bad picture")?;
    let d = histories::decoherence_functional(&problem.space, &problem.rho0, &problem.propagators, pic).map_err(err)?;
    if d.histories.len() > MAX_HISTORIES {
        return Err(format!("{} histories exceed the tabulation limit {MAX_HISTORIES}", d.histories.len()));
    }

    let mut functional = CsvTable::new("functional", "dimensionless", &["alpha", "beta", "re", "im"]);
    let mut probs = CsvTable::new("probabilities", "dimensionless", &["history", "probability"]);
    for (i, a) in d.histories.iter().enumerate() {
        probs.push(vec![label(&a.choices), num(d.values[(i, i)].re)]);
        for (j, b) in d.histories.iter().enumerate() {
            let [re, im] = complex(d.values[(i, j)]);
            functional.push(vec![label(&a.choices), label(&b.choices), re, im]);
        }
    }
    let mut consistency = CsvTable::new("consistency", "dimensionless", &["mode", "max_violation", "tol", "pass"]);
    for (name, mode) in [("weak", ConsistencyMode::Weak), ("medium", ConsistencyMode::Medium)] {
        let r = histories::check_consistency(&d, mode, p.tol);
        consistency.push(vec![name.into(), num(r.max_violation), num(r.tol), r.pass.to_string()]);
    }

    let mut out = Artifacts { tables: vec![functional, probs, consistency], ..Default::default() };
    out.note("histories", d.histories.len());
    out.note("hermiticity_residual", d.hermiticity_residual());
    Ok(out)
}
