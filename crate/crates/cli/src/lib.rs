//! Scenario runner: loads a TOML configuration, runs one engine and writes
//! CSV tables plus a `manifest.json` with content digests.
//!
//! Identical configuration and seed give byte-identical CSVs for any worker
//! count: every random draw comes from a stream keyed by `(seed, stream id)`
//! and parallel work is split independently of the pool size.

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub mod config;
pub mod output;
pub mod scenarios;

pub use config::{ScenarioConfig, Violation};
pub use output::{Artifacts, RunManifest};
pub use scenarios::{EngineError, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<Violation>),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(_) | CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the rayon default when `None`.
    pub workers: Option<usize>,
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    cfg.validate()
}

/// Validates, runs and writes every artifact.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(CliError::Config(violations));
    }
    let kind = cfg.kind().map_err(|v| CliError::Config(vec![v]))?;
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| cfg.resolve(&o.to_string_lossy())))
        .ok_or_else(|| CliError::Config(vec![Violation::new("out", "no output directory (set `out` or pass --out)")]))?;

    let start = Instant::now();
    let artifacts = match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Config(vec![Violation::new("workers", e.to_string())]))?;
            pool.install(|| scenarios::execute(kind, cfg))?
        }
        None => scenarios::execute(kind, cfg)?,
    };
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    let files = output::write_tables(&dir, &artifacts.tables).map_err(io(&dir))?;
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: kind.name().to_string(),
        config: serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
        duration_seconds: start.elapsed().as_secs_f64(),
        files,
        notes: artifacts.notes,
    };
    output::write_manifest(&dir, &manifest).map_err(io(&dir))?;
    Ok(manifest)
}
