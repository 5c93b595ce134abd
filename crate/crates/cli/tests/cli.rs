use std::path::{Path, PathBuf};
use std::process::Command;

use declab_cli::output::{self, FileDigest};
use declab_cli::{RunOptions, ScenarioConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_declab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(output::MANIFEST_NAME)).unwrap()).unwrap()
}

#[test]
fn list_scenarios() {
    let out = bin().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["spinbath", "sieve", "envariance", "histories", "grw", "bohm", "measurement"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write(tmp.path(), "u.toml", "scenario = \"teleport\"\nseed = 1\n");
    let out = bin().args(["run"]).arg(&unknown).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));

    let missing = bin().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    // passes validation but the manifest refers to a file that is not there
    let data = tmp.path().join("d");
    std::fs::create_dir(&data).unwrap();
    write(&data, "setup.toml", "system_basis = [\"nope.txt\"]\nready_state = \"nope.txt\"\npointer_states = [\"nope.txt\"]\n");
    let cfg = write(tmp.path(), "m.toml", "scenario = \"measurement\"\n[params]\nmanifest = \"d/setup.toml\"\n");
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("m")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let ok = bin().arg("run").arg(configs().join("envariance.toml")).arg("--out").arg(tmp.path().join("e")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn validate_examples() {
    let grw = "scenario = \"grw\"\nseed = 3\n[params]\nnu = 2.0\n";
    assert!(ScenarioConfig::parse(grw, &[]).unwrap().validate().is_empty());

    let negative = ScenarioConfig::parse(grw, &["nu=-1.0".into()]).unwrap().validate();
    assert_eq!(negative.len(), 1, "{negative:?}");
    assert_eq!(negative[0].path, "params.nu");

    let unseeded = ScenarioConfig::parse("scenario = \"grw\"\n[params]\nnu = 2.0\n", &[]).unwrap().validate();
    assert_eq!(unseeded.len(), 1, "{unseeded:?}");
    assert_eq!(unseeded[0].path, "seed");

    let typo = ScenarioConfig::parse("scenario = \"bohm\"\nseed = 1\n[params]\ntrajectorys = 5\n", &[]).unwrap().validate();
    assert_eq!(typo.len(), 1);
    assert!(typo[0].message.contains("trajectorys"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "g.toml", grw);
    let out = bin().arg("validate").arg(&cfg).args(["--set", "nu=-3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn every_shipped_config_validates() {
    for e in std::fs::read_dir(configs()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let cfg = ScenarioConfig::load(&p, &[]).unwrap();
            assert!(cfg.validate().is_empty(), "{}: {:?}", p.display(), cfg.validate());
        }
    }
}

#[test]
fn csv_shape_and_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let status = bin()
        .arg("run")
        .arg(configs().join("histories-manifest.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let m = manifest(&out);
    let files: Vec<FileDigest> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| FileDigest {
            path: f["path"].as_str().unwrap().into(),
            bytes: f["bytes"].as_u64().unwrap() as usize,
            sha256: f["sha256"].as_str().unwrap().into(),
        })
        .collect();
    assert!(!files.is_empty());
    assert!(output::verify_digests(&out, &files).unwrap().is_empty());
    for f in &files {
        let text = std::fs::read_to_string(out.join(&f.path)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# units: "));
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert!(lines.all(|l| l.split(',').count() == header.len()), "{}", f.path);
    }
    assert_eq!(m["scenario"], "histories");
    assert_eq!(m["config"]["params"]["manifest"], "data/qubit-histories.toml");
}

#[test]
fn complex_columns_are_split() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::parse("scenario = \"spinbath\"\nseed = 1\n[params]\nn = 3\nsamples = 5\n", &[]).unwrap();
    declab_cli::run(&cfg, &RunOptions { workers: Some(2), out: Some(tmp.path().to_path_buf()) }).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("z.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "t,z_re,z_im,z_abs_sq,bruteforce_abs_err");
}

#[test]
fn spinbath_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", "scenario = \"spinbath\"\nseed = 7\n[params]\nn = 10\n");
    let digests: Vec<serde_json::Value> = (0..2)
        .map(|i| {
            let out = tmp.path().join(format!("r{i}"));
            assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap().status.success());
            manifest(&out)["files"].clone()
        })
        .collect();
    assert_eq!(digests[0], digests[1]);

    let other = tmp.path().join("r-seed");
    assert!(bin().arg("run").arg(&cfg).args(["--seed", "8"]).arg("--out").arg(&other).output().unwrap().status.success());
    assert_ne!(manifest(&other)["files"], digests[0]);
}

#[test]
fn grw_preset_records_rescaling() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::parse(
        "scenario = \"grw\"\nseed = 5\n[params]\npreset = \"paper-macroscopic\"\ndesk_rate = 50.0\nn_particles = 10\nt_end = 2.0\nl = 64\n",
        &[],
    )
    .unwrap();
    let m = declab_cli::run(&cfg, &RunOptions { workers: Some(1), out: Some(tmp.path().to_path_buf()) }).unwrap();
    assert_eq!(m.notes["preset_mean_inter_hit_seconds"], "1e-7");
    // 50 per time unit against 10²³ × 10⁻¹⁶ s⁻¹
    let factor = m.notes["rescale_factor"].as_f64().unwrap();
    assert!((factor - 50.0 / 1e7).abs() < 1e-18);
    assert_eq!(m.notes["total_rate"].as_f64(), Some(50.0));
}

#[test]
fn desk_event_count_is_poisson() {
    // 20 runs at N ν = 50 over t = 2: each count is Poisson with mean 100
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::parse(
        "scenario = \"grw\"\nseed = 9\n[params]\nnu = 5.0\nn_particles = 10\nt_end = 2.0\nruns = 20\nl = 64\n",
        &[],
    )
    .unwrap();
    declab_cli::run(&cfg, &RunOptions { workers: None, out: Some(tmp.path().to_path_buf()) }).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("events.csv")).unwrap();
    let mut counts = [0usize; 20];
    for l in text.lines().skip(2) {
        counts[l.split(',').next().unwrap().parse::<usize>().unwrap()] += 1;
    }
    let total: usize = counts.iter().sum();
    // sum of 20 runs has mean 2000 and σ ≈ 44.7
    assert!((total as f64 - 2000.0).abs() < 3.0 * 2000f64.sqrt(), "{total}");
    assert!(counts.iter().all(|&c| (c as f64 - 100.0).abs() < 5.0 * 10.0), "{counts:?}");
}
