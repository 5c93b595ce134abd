use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use declab_cli::{run, CliError, RunOptions, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "declab", version, about = "Decoherence laboratory scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSVs plus manifest.json
    Run {
        config: PathBuf,
        /// Overrides the configured seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value` override, repeatable; bare keys address [params]
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List every schema violation without running
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the available scenarios
    ListScenarios,
}

fn load(path: &Path, set: &[String]) -> Result<ScenarioConfig, CliError> {
    ScenarioConfig::load(path, set).map_err(CliError::Config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ListScenarios => {
            for k in Scenario::ALL {
                println!("{:<12} {}", k.name(), k.summary());
            }
            Ok(())
        }
        Command::Validate { config, set } => load(&config, &set).and_then(|cfg| {
            let v = cfg.validate();
            if v.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(CliError::Config(v))
            }
        }),
        Command::Run { config, seed, out, mut set, workers } => {
            if let Some(s) = seed {
                set.push(format!("seed={s}"));
            }
            load(&config, &set).and_then(|cfg| {
                let m = run(&cfg, &RunOptions { workers, out })?;
                for f in &m.files {
                    println!("{}  {}", f.sha256, f.path);
                }
                Ok(())
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("declab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
