use declab_core::dynamics::{
    self, BohmEnsemble, DensityGrid, FreeEvolution, GRWParams, GridWavefunction, MasterParams, TrajectoryStatus,
};
use declab_core::random;
use statrs::distribution::{ContinuousCDF, Normal};

fn packet(sigma: f64) -> GridWavefunction {
    GridWavefunction::gaussian(-10.24, 0.01, 2048, 1.0, 0.0, sigma, 0.0).unwrap()
}

#[test]
fn hits_stay_normalized() {
    let psi = GridWavefunction::packets(-10.24, 0.02, 1024, 1.0, &[(-4.0, 0.3), (4.0, 0.7)], 0.5).unwrap();
    let params = GRWParams::new(1.0, 0.3, 1).unwrap();
    let mut rng = random::stream(21, 0);
    for _ in 0..200 {
        let (hit, ev) = dynamics::grw_hit(&psi, &params, &mut rng).unwrap();
        assert!((hit.norm_sq() - 1.0).abs() < 1e-12);
        assert!(ev.center >= psi.x_min() && ev.center <= psi.x_max());
        // the hit kills the far packet
        let far: f64 = (0..hit.len()).filter(|&i| (hit.x(i) - ev.center).abs() > 3.0).map(|i| hit.density()[i]).sum();
        assert!(far * hit.dx() < 1e-6, "{far}");
    }
}

// |ψ|² ~ N(0, σ²) and the kernel e^{−d²/Δ²} has variance Δ²/2, so hit
// centers follow N(0, σ² + Δ²/2) up to grid rounding.
#[test]
fn hit_centers_follow_smeared_density() {
    let (sigma, delta) = (1.0, 0.5);
    let psi = packet(sigma);
    let params = GRWParams::new(1.0, delta, 1).unwrap();
    let mut rng = random::stream(22, 0);
    let n = 10_000;
    let mut centers: Vec<f64> = (0..n).map(|_| dynamics::grw_hit(&psi, &params, &mut rng).unwrap().1.center).collect();
    centers.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, (sigma * sigma + 0.5 * delta * delta).sqrt()).unwrap();
    let half = 0.5 * psi.dx();
    let mut ks = 0.0f64;
    for (i, c) in centers.iter().enumerate() {
        // centers are grid points standing for [c − dx/2, c + dx/2)
        let below = i as f64 / n as f64;
        let upto = (i + 1) as f64 / n as f64;
        ks = ks.max((normal.cdf(c + half) - below).abs()).max((upto - normal.cdf(c - half)).abs());
    }
    assert!(ks < 0.02, "KS distance {ks}");
}

#[test]
fn uniform_state_gives_uniform_centers() {
    // plane wave over a wide grid, centers tallied in 10 interior bins
    let len = 1000;
    let psi = GridWavefunction::normalized(0.0, 0.1, vec![declab_core::C64::new(1.0, 0.0); len], 1.0).unwrap();
    let params = GRWParams::new(1.0, 0.2, 1).unwrap();
    let mut rng = random::stream(23, 0);
    let mut counts = [0usize; 10];
    let mut inside = 0usize;
    for _ in 0..20_000 {
        let c = dynamics::grw_hit(&psi, &params, &mut rng).unwrap().1.center;
        if (5.0..95.0).contains(&c) {
            counts[((c - 5.0) / 9.0) as usize] += 1;
            inside += 1;
        }
    }
    let e = inside as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&k| (k as f64 - e).powi(2) / e).sum();
    // 9 dof, 0.999 quantile is 27.9
    assert!(chi2 < 27.9, "χ² = {chi2} {counts:?}");
}

#[test]
fn localization_never_raises_purity() {
    let psi = GridWavefunction::packets(-8.0, 0.125, 128, 1.0, &[(-2.5, 0.5), (2.5, 0.5)], 0.6).unwrap();
    let mut rho = DensityGrid::from_wavefunction(&psi);
    let params = MasterParams { lambda: 0.4, kinetic: true };
    let mut last = rho.purity();
    for _ in 0..300 {
        rho = dynamics::master_step(&rho, &params, 0.01).unwrap();
        let p = rho.purity();
        assert!(p <= last + 1e-10, "{p} > {last}");
        assert!((rho.trace() - 1.0).abs() < 1e-9);
        last = p;
    }
    assert!(last < 0.9);
}

#[test]
fn cat_coherence_decays_at_lambda_d_squared() {
    // ρ(−d/2, d/2) with Λ, divided by the same element under free evolution
    // alone, isolates the localization factor for heavy, slowly spreading packets
    let d = 4.0;
    let lambda = 0.05;
    let psi = GridWavefunction::packets(-12.8, 0.1, 256, 50.0, &[(-d / 2.0, 0.5), (d / 2.0, 0.5)], 0.4).unwrap();
    let rho0 = DensityGrid::from_wavefunction(&psi);
    let (i, j) = (108, 148);
    assert!((rho0.x(i) + d / 2.0).abs() < 1e-9 && (rho0.x(j) - d / 2.0).abs() < 1e-9);
    let (mut open, mut free) = (rho0.clone(), rho0);
    let with = MasterParams { lambda, kinetic: true };
    let without = MasterParams { lambda: 0.0, kinetic: true };
    let dt = 0.02;
    let (mut ts, mut logs) = (vec![0.0], vec![0.0]);
    for s in 1..=100 {
        open = dynamics::master_step(&open, &with, dt).unwrap();
        free = dynamics::master_step(&free, &without, dt).unwrap();
        if s % 10 == 0 {
            ts.push(s as f64 * dt);
            logs.push((open.values()[(i, j)].norm() / free.values()[(i, j)].norm()).ln());
        }
    }
    // least-squares slope of the log ratio against t
    let n = ts.len() as f64;
    let (mt, ml) = (ts.iter().sum::<f64>() / n, logs.iter().sum::<f64>() / n);
    let slope = ts.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum::<f64>()
        / ts.iter().map(|t| (t - mt).powi(2)).sum::<f64>();
    let rate = -slope;
    let expect = lambda * d * d;
    assert!((rate - expect).abs() < 0.02 * expect, "rate {rate} vs {expect}");
}

#[test]
fn symmetric_double_slit_trajectories_keep_their_side() {
    let psi = GridWavefunction::packets(-25.6, 0.05, 1024, 1.0, &[(-3.0, 0.5), (3.0, 0.5)], 0.6).unwrap();
    let ens = BohmEnsemble::sample(&psi, 400, 31, 0);
    let run = dynamics::bohm_run(&FreeEvolution::new(psi), &ens, 0.02, 150).unwrap();
    let mut checked = 0;
    for (path, status) in run.paths.iter().zip(&run.status) {
        if *status != TrajectoryStatus::Active || path[0].abs() < 1e-9 {
            continue;
        }
        let side = path[0].signum();
        assert!(path.iter().all(|x| x * side > 0.0), "crossed the axis from {}", path[0]);
        checked += 1;
    }
    assert!(checked > 350, "{checked}");
}

#[test]
fn no_two_trajectories_cross() {
    let psi = GridWavefunction::gaussian(-25.6, 0.05, 1024, 1.0, 0.0, 0.5, 1.0).unwrap();
    let ens = BohmEnsemble::sample(&psi, 120, 32, 0);
    let run = dynamics::bohm_run(&FreeEvolution::new(psi), &ens, 0.02, 100).unwrap();
    let live: Vec<&Vec<f64>> =
        run.paths.iter().zip(&run.status).filter(|(_, s)| **s == TrajectoryStatus::Active).map(|(p, _)| p).collect();
    for a in 0..live.len() {
        for b in a + 1..live.len() {
            let sign = (live[a][0] - live[b][0]).signum();
            assert!(
                live[a].iter().zip(live[b]).all(|(x, y)| (x - y) * sign >= 0.0),
                "trajectories {a} and {b} swap order"
            );
        }
    }
}
