use declab_core::dynamics::{self, BohmEnsemble, BohmRun, FreeEvolution, GridWavefunction, TrajectoryStatus, WavefunctionSource};
use rayon::prelude::*;
use serde::Deserialize;

use super::{err, params, parse_params, require_seed, seed};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{num, Artifacts, CsvTable};

const UNITS: &str = "x in grid length units; t in time units; hbar = 1";
/// Trajectories per work item; fixed so the split never depends on the pool size.
const CHUNK: usize = 1024;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    l: usize,
    dx: f64,
    x_min: Option<f64>,
    mass: f64,
    sigma: f64,
    k0: f64,
    /// `gaussian` or `double-slit` (two packets at ±separation/2).
    source: String,
    separation: f64,
    trajectories: usize,
    dt: f64,
    steps: usize,
    record_every: usize,
    /// Trajectories written to the trajectory table.
    record_trajectories: usize,
    min_expected: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            l: 1024,
            dx: 0.05,
            x_min: None,
            mass: 1.0,
            sigma: 0.5,
            k0: 0.0,
            source: "gaussian".into(),
            separation: 6.0,
            trajectories: 10_000,
            dt: 0.02,
            steps: 50,
            record_every: 5,
            record_trajectories: 200,
            min_expected: 5.0,
        }
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    require_seed(cfg, &mut out);
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    require(&mut out, (dynamics::MIN_GRID..=1 << 16).contains(&p.l), "l", "must be in 16..=65536");
    require(&mut out, p.dx > 0.0 && p.dx.is_finite(), "dx", "must be positive");
    require(&mut out, p.mass > 0.0 && p.mass.is_finite(), "mass", "must be positive");
    require(&mut out, p.sigma > 0.0 && p.sigma.is_finite(), "sigma", "must be positive");
    require(&mut out, p.k0.is_finite(), "k0", "must be finite");
    require(&mut out, matches!(p.source.as_str(), "gaussian" | "double-slit"), "source", "must be `gaussian` or `double-slit`");
    require(&mut out, p.separation > 0.0 && p.separation.is_finite(), "separation", "must be positive");
    require(&mut out, (1..=1_000_000).contains(&p.trajectories), "trajectories", "must be in 1..=1000000");
    require(&mut out, p.dt > 0.0 && p.dt.is_finite(), "dt", "must be positive");
    require(&mut out, (1..=100_000).contains(&p.steps), "steps", "must be in 1..=100000");
    require(&mut out, p.record_every >= 1, "record_every", "must be at least 1");
    require(&mut out, p.min_expected > 0.0, "min_expected", "must be positive");
    out
}

fn initial(p: &Params) -> Result<GridWavefunction, String> {
    let x_min = p.x_min.unwrap_or(-0.5 * p.l as f64 * p.dx);
    let psi = if p.source == "double-slit" {
        let h = 0.5 * p.separation;
        GridWavefunction::packets(x_min, p.dx, p.l, p.mass, &[(-h, 0.5), (h, 0.5)], p.sigma)
    } else {
        GridWavefunction::gaussian(x_min, p.dx, p.l, p.mass, 0.0, p.sigma, p.k0)
    };
    psi.map_err(err)
}

/// Sign changes of `q` for trajectories that start off the axis.
fn axis_crossings(run: &BohmRun) -> usize {
    run.paths
        .iter()
        .filter(|path| {
            let s0 = path[0].signum();
            path[0] != 0.0 && path.iter().any(|&q| q.signum() == -s0 && q != 0.0)
        })
        .count()
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let psi0 = initial(&p)?;
    let ensemble = BohmEnsemble::sample(&psi0, p.trajectories, seed(cfg)?, 0);
    let source = FreeEvolution::new(psi0.clone());

    let chunks: Vec<BohmRun> = ensemble
        .positions
        .par_chunks(CHUNK)
        .map(|c| {
            let part = BohmEnsemble { positions: c.to_vec(), ..ensemble.clone() };
            dynamics::bohm_run(&source, &part, p.dt, p.steps).map_err(err)
        })
        .collect::<Result<_, _>>()?;
    let mut run = BohmRun { times: chunks[0].times.clone(), paths: Vec::new(), status: Vec::new() };
    for c in chunks {
        run.paths.extend(c.paths);
        run.status.extend(c.status);
    }

    let mut traj = CsvTable::new("trajectories", UNITS, &["trajectory", "t", "q"]);
    for (j, path) in run.paths.iter().enumerate().take(p.record_trajectories) {
        for (s, q) in path.iter().enumerate() {
            if s % p.record_every == 0 || s + 1 == path.len() {
                traj.push(vec![j.to_string(), num(run.times[s]), num(*q)]);
            }
        }
    }

    let t_end = *run.times.last().expect("non-empty");
    let chi = dynamics::equivariance_chi2(&run.final_positions(), &source.at(t_end), p.min_expected);
    let stuck = run.status.iter().filter(|s| **s == TrajectoryStatus::Stuck).count();
    let mut summary = CsvTable::new("summary", "counts; chi2 dimensionless", &["quantity", "value"]);
    let mut put = |k: &str, v: String| summary.push(vec![k.into(), v]);
    put("trajectories", run.paths.len().to_string());
    put("escaped", (run.escaped() - stuck).to_string());
    put("stuck", stuck.to_string());
    put("crossings", run.crossings().to_string());
    put("axis_crossings", axis_crossings(&run).to_string());
    put("chi2", num(chi.statistic));
    put("dof", chi.dof.to_string());
    put("p_value", num(chi.p_value));

    let mut hist = CsvTable::new("final_positions", UNITS, &["trajectory", "q", "status"]);
    for (j, (path, st)) in run.paths.iter().zip(&run.status).enumerate() {
        let status = match st {
            TrajectoryStatus::Active => "active",
            TrajectoryStatus::Escaped => "escaped",
            TrajectoryStatus::Stuck => "stuck",
        };
        hist.push(vec![j.to_string(), num(*path.last().expect("non-empty")), status.into()]);
    }

    let mut out = Artifacts { tables: vec![traj, summary, hist], ..Default::default() };
    out.note("chi2_p_value", chi.p_value);
    Ok(out)
}
