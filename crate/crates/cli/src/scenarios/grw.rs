use declab_core::dynamics::{self, DensityGrid, GRWParams, GridWavefunction, MasterParams};
use declab_core::random;
use rayon::prelude::*;
use serde::Deserialize;

use super::{err, params, parse_params, require_seed, seed};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{num, Artifacts, CsvTable};

const UNITS: &str = "x in grid length units; t in inverse rate units; hbar = 1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    l: usize,
    dx: f64,
    x_min: Option<f64>,
    mass: f64,
    sigma: f64,
    /// `[center, weight]` pairs.
    packets: Vec<[f64; 2]>,
    preset: Option<String>,
    /// Total hit rate used with a preset.
    desk_rate: f64,
    nu: Option<f64>,
    delta: f64,
    n_particles: u64,
    t_end: f64,
    runs: usize,
    lambda: Option<f64>,
    master_steps: usize,
    kinetic: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            l: 256,
            dx: 0.1,
            x_min: None,
            mass: 1.0,
            sigma: 0.5,
            packets: vec![[-5.0, 0.3], [5.0, 0.7]],
            preset: None,
            desk_rate: 50.0,
            nu: None,
            delta: 0.5,
            n_particles: 1,
            t_end: 2.0,
            runs: 1,
            lambda: None,
            master_steps: 200,
            kinetic: true,
        }
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    require_seed(cfg, &mut out);
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    require(&mut out, (dynamics::MIN_GRID..=1 << 14).contains(&p.l), "l", "must be in 16..=16384");
    require(&mut out, p.dx > 0.0 && p.dx.is_finite(), "dx", "must be positive");
    require(&mut out, p.mass > 0.0 && p.mass.is_finite(), "mass", "must be positive");
    require(&mut out, p.sigma > 0.0 && p.sigma.is_finite(), "sigma", "must be positive");
    require(&mut out, !p.packets.is_empty(), "packets", "need at least one packet");
    require(&mut out, p.packets.iter().all(|[c, w]| c.is_finite() && *w > 0.0 && w.is_finite()), "packets", "centers finite, weights positive");
    match (&p.preset, p.nu) {
        (Some(name), None) => {
            require(&mut out, dynamics::preset(name).is_some(), "preset", "unknown preset");
            require(&mut out, p.desk_rate >= 0.0 && p.desk_rate.is_finite(), "desk_rate", "must be non-negative");
        }
        (Some(_), Some(_)) => out.push(Violation::new("params.nu", "give either a preset or nu, not both")),
        (None, Some(nu)) => require(&mut out, nu >= 0.0 && nu.is_finite(), "nu", "must be non-negative"),
        (None, None) => out.push(Violation::new("params.nu", "required without a preset")),
    }
    require(&mut out, p.delta > 0.0 && p.delta.is_finite(), "delta", "must be positive");
    require(&mut out, p.n_particles >= 1, "n_particles", "must be at least 1");
    require(&mut out, p.t_end > 0.0 && p.t_end.is_finite(), "t_end", "must be positive");
    require(&mut out, (1..=100_000).contains(&p.runs), "runs", "must be in 1..=100000");
    if let Some(lambda) = p.lambda {
        require(&mut out, lambda >= 0.0 && lambda.is_finite(), "lambda", "must be non-negative");
        require(&mut out, p.l <= 1024, "l", "master equation grids are limited to 1024 points");
        require(&mut out, p.master_steps >= 1, "master_steps", "must be at least 1");
    }
    out
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let seed = seed(cfg)?;
    let mut out = Artifacts::default();
    let x_min = p.x_min.unwrap_or(-0.5 * p.l as f64 * p.dx);
    let packets: Vec<(f64, f64)> = p.packets.iter().map(|[c, w]| (*c, *w)).collect();
    let psi0 = GridWavefunction::packets(x_min, p.dx, p.l, p.mass, &packets, p.sigma).map_err(err)?;

    let grw = match &p.preset {
        Some(name) => {
            let preset = dynamics::preset(name).ok_or("unknown preset")?;
            let desk = preset.desk(p.desk_rate, p.n_particles, p.delta).map_err(err)?;
            out.note("preset", preset.name);
            out.note("preset_rate_per_second", preset.rate_per_second().to_string());
            out.note(
                "preset_mean_inter_hit_seconds",
                preset.mean_inter_hit_seconds().map(|s| s.to_string()).unwrap_or_default(),
            );
            out.note("rescale_factor", desk.rescale_factor);
            desk.params
        }
        None => GRWParams::new(p.nu.ok_or("nu missing")?, p.delta, p.n_particles).map_err(err)?,
    };
    out.note("total_rate", grw.rate());

    let runs: Vec<_> = (0..p.runs)
        .into_par_iter()
        .map(|r| dynamics::grw_run(&psi0, &grw, p.t_end, &mut random::stream(seed, r as u64)).map_err(err))
        .collect::<Result<_, _>>()?;

    let mut events = CsvTable::new("events", UNITS, &["run", "time", "center", "particle"]);
    let mut finals = CsvTable::new("final_weights", UNITS, &["run", "events", "packet", "weight"]);
    for (r, run) in runs.iter().enumerate() {
        for e in &run.events {
            events.push(vec![r.to_string(), num(e.time), num(e.center), e.particle.to_string()]);
        }
        // weight of the final state nearest each initial packet center
        let psi = &run.final_state;
        let dens = psi.density();
        let mut w = vec![0.0; packets.len()];
        for (i, d) in dens.iter().enumerate() {
            let x = psi.x(i);
            let k = (0..packets.len())
                .min_by(|&a, &b| (x - packets[a].0).abs().total_cmp(&(x - packets[b].0).abs()))
                .expect("non-empty");
            w[k] += d * psi.dx();
        }
        for (k, wk) in w.iter().enumerate() {
            finals.push(vec![r.to_string(), run.events.len().to_string(), k.to_string(), num(*wk)]);
        }
    }
    let mut snaps = CsvTable::new("snapshots", UNITS, &["t", "x", "density"]);
    for s in &runs[0].snapshots {
        for (i, d) in s.density.iter().enumerate() {
            snaps.push(vec![num(s.time), num(psi0.x(i)), num(*d)]);
        }
    }
    out.tables = vec![events, snaps, finals];

    if let Some(lambda) = p.lambda {
        out.tables.push(master_series(&p, &psi0, &packets, lambda)?);
    }
    Ok(out)
}

/// Norm of the coherence block between the first two packets over time.
fn master_series(p: &Params, psi0: &GridWavefunction, packets: &[(f64, f64)], lambda: f64) -> Result<CsvTable, String> {
    let mut table = CsvTable::new(
        "offdiag",
        "t in time units; lambda in 1/(length^2 time); norms dimensionless",
        &["t", "patch_norm", "lambda_only_law", "trace", "purity"],
    );
    let params = MasterParams { lambda, kinetic: p.kinetic };
    let dt = p.t_end / p.master_steps as f64;
    let (c0, c1) = (packets[0].0, packets.get(1).map_or(packets[0].0, |q| q.0));
    let half = 3.0 * p.sigma;
    let rows = (c0 - half, c0 + half);
    let cols = (c1 - half, c1 + half);
    let sep = c1 - c0;
    let mut rho = DensityGrid::from_wavefunction(psi0);
    let start = rho.patch_norm(rows, cols);
    for s in 0..=p.master_steps {
        let t = s as f64 * dt;
        if s > 0 {
            rho = dynamics::master_step(&rho, &params, dt).map_err(err)?;
        }
        table.push(vec![
            num(t),
            num(rho.patch_norm(rows, cols)),
            num(start * (-lambda * sep * sep * t).exp()),
            num(rho.trace()),
            num(rho.purity()),
        ]);
    }
    Ok(table)
}
