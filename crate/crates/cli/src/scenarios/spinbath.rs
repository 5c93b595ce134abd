use declab_core::random;
use declab_core::spinbath::{self, SpinBathParams, MAX_BRUTE_FORCE_ENV};
use declab_core::C64;
use rayon::prelude::*;
use serde::Deserialize;

use super::{err, params, parse_params, require_seed, seed};
use crate::config::{require, ScenarioConfig, Violation};
use crate::output::{complex, num, Artifacts, CsvTable};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Params {
    n: usize,
    t_max: f64,
    samples: usize,
    /// All couplings `g` and `|α|² = alpha_sq`; otherwise drawn from the seed.
    homogeneous: bool,
    g: f64,
    alpha_sq: f64,
    /// `|a|²` of the system spin in the homogeneous case.
    a_sq: f64,
    /// Brute-force check for `n` up to this size.
    brute_force_max: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 10,
            t_max: 10.0,
            samples: 201,
            homogeneous: false,
            g: 1.0,
            alpha_sq: 0.5,
            a_sq: 0.5,
            brute_force_max: 12,
        }
    }
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(p) = parse_params::<Params>(cfg, &mut out) else { return out };
    if !p.homogeneous {
        require_seed(cfg, &mut out);
    }
    require(&mut out, (1..=100_000).contains(&p.n), "n", "must be in 1..=100000");
    require(&mut out, p.t_max > 0.0 && p.t_max.is_finite(), "t_max", "must be positive");
    require(&mut out, (2..=1_000_000).contains(&p.samples), "samples", "must be in 2..=1000000");
    require(&mut out, p.g.is_finite(), "g", "must be finite");
    require(&mut out, (0.0..=1.0).contains(&p.alpha_sq), "alpha_sq", "must be in [0, 1]");
    require(&mut out, (0.0..=1.0).contains(&p.a_sq), "a_sq", "must be in [0, 1]");
    require(&mut out, p.brute_force_max <= MAX_BRUTE_FORCE_ENV, "brute_force_max", "exceeds the dense limit");
    out
}

fn bath(cfg: &ScenarioConfig, p: &Params) -> Result<SpinBathParams, String> {
    if p.homogeneous {
        let r = |x: f64| C64::new(x.sqrt(), 0.0);
        SpinBathParams::homogeneous(p.n, r(p.a_sq), r(1.0 - p.a_sq), r(p.alpha_sq), r(1.0 - p.alpha_sq), p.g).map_err(err)
    } else {
        SpinBathParams::random(p.n, &mut random::stream(seed(cfg)?, 0)).map_err(err)
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, String> {
    let p: Params = params(cfg)?;
    let bath = bath(cfg, &p)?;
    let check = p.n <= p.brute_force_max;
    let times: Vec<f64> = (0..p.samples).map(|i| p.t_max * i as f64 / (p.samples - 1) as f64).collect();

    let rows: Vec<Result<(Vec<String>, Vec<String>), String>> = times
        .par_iter()
        .map(|&t| {
            let z = spinbath::z_analytic(&bath, t);
            let mut zrow = vec![num(t)];
            zrow.extend(complex(z));
            zrow.push(num(spinbath::z_mod_sq(&bath, t)));
            if check {
                let (up, down) = spinbath::brute_force_branches(&bath, t).map_err(err)?;
                zrow.push(num((up.dotc(&down) - z).norm()));
            }
            let rho = spinbath::reduced_density(&bath, t);
            let m = rho.matrix();
            let mut rrow = vec![num(t), num(m[(0, 0)].re)];
            rrow.extend(complex(m[(0, 1)]));
            rrow.push(num(m[(1, 1)].re));
            Ok((zrow, rrow))
        })
        .collect();

    let mut header = vec!["t", "z_re", "z_im", "z_abs_sq"];
    if check {
        header.push("bruteforce_abs_err");
    }
    let mut z = CsvTable::new("z", "t in units of 1/g; z dimensionless", &header);
    let mut rho = CsvTable::new(
        "rho_system",
        "t in units of 1/g; matrix elements dimensionless",
        &["t", "rho_uu", "rho_ud_re", "rho_ud_im", "rho_dd"],
    );
    for r in rows {
        let (zr, rr) = r?;
        z.push(zr);
        rho.push(rr);
    }

    let mut couplings = CsvTable::new("environment", "g in units of the coupling scale", &["k", "g", "alpha_re", "alpha_im", "beta_re", "beta_im"]);
    for (k, (g, (al, be))) in bath.couplings().iter().zip(bath.env_amps()).enumerate() {
        let mut row = vec![k.to_string(), num(*g)];
        row.extend(complex(*al));
        row.extend(complex(*be));
        couplings.push(row);
    }

    let mut out = Artifacts { tables: vec![z, rho, couplings], ..Default::default() };
    out.note("long_time_average", spinbath::long_time_average(&bath));
    out.note("n", p.n);
    Ok(out)
}
