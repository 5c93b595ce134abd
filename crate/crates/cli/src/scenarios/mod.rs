//! Scenario engines. Each one validates its `[params]` table and turns a
//! configuration into CSV tables.

use std::str::FromStr;

use thiserror::Error;

use crate::config::{ScenarioConfig, Violation};
use crate::output::Artifacts;

mod bohm;
mod envariance;
mod grw;
mod histories;
mod measurement;
mod sieve;
mod spinbath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    SpinBath,
    Sieve,
    Envariance,
    Histories,
    Grw,
    Bohm,
    Measurement,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::SpinBath,
        Scenario::Sieve,
        Scenario::Envariance,
        Scenario::Histories,
        Scenario::Grw,
        Scenario::Bohm,
        Scenario::Measurement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SpinBath => "spinbath",
            Scenario::Sieve => "sieve",
            Scenario::Envariance => "envariance",
            Scenario::Histories => "histories",
            Scenario::Grw => "grw",
            Scenario::Bohm => "bohm",
            Scenario::Measurement => "measurement",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::SpinBath => "decoherence factor z(t) and reduced state of a spin in a spin bath",
            Scenario::Sieve => "commutativity check and predictability-sieve ranking over time",
            Scenario::Envariance => "swap derivation of equal probabilities and rational fine-graining",
            Scenario::Histories => "decoherence functional, consistency and probabilities of histories",
            Scenario::Grw => "GRW hit process, wavefunction snapshots and master-equation coherences",
            Scenario::Bohm => "Bohmian trajectory ensemble with an equivariance check",
            Scenario::Measurement => "premeasurement and the system-apparatus-environment chain",
        }
    }
}

impl FromStr for Scenario {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Scenario::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

pub fn names() -> Vec<&'static str> {
    Scenario::ALL.iter().map(|k| k.name()).collect()
}

#[derive(Debug, Error)]
#[error("{scenario}: {message}")]
pub struct EngineError {
    pub scenario: &'static str,
    pub message: String,
}

pub fn validate(kind: Scenario, cfg: &ScenarioConfig) -> Vec<Violation> {
    match kind {
        Scenario::SpinBath => spinbath::validate(cfg),
        Scenario::Sieve => sieve::validate(cfg),
        Scenario::Envariance => envariance::validate(cfg),
        Scenario::Histories => histories::validate(cfg),
        Scenario::Grw => grw::validate(cfg),
        Scenario::Bohm => bohm::validate(cfg),
        Scenario::Measurement => measurement::validate(cfg),
    }
}

/// Runs a validated configuration.
pub fn execute(kind: Scenario, cfg: &ScenarioConfig) -> Result<Artifacts, EngineError> {
    let res = match kind {
        Scenario::SpinBath => spinbath::run(cfg),
        Scenario::Sieve => sieve::run(cfg),
        Scenario::Envariance => envariance::run(cfg),
        Scenario::Histories => histories::run(cfg),
        Scenario::Grw => grw::run(cfg),
        Scenario::Bohm => bohm::run(cfg),
        Scenario::Measurement => measurement::run(cfg),
    };
    res.map_err(|message| EngineError { scenario: kind.name(), message })
}

/// Parses `[params]`, recording a violation on failure.
fn parse_params<P: serde::de::DeserializeOwned>(cfg: &ScenarioConfig, out: &mut Vec<Violation>) -> Option<P> {
    cfg.params().map_err(|v| out.push(v)).ok()
}

fn require_seed(cfg: &ScenarioConfig, out: &mut Vec<Violation>) {
    if cfg.seed.is_none() {
        out.push(Violation::new("seed", "required for stochastic scenarios"));
    }
}

fn seed(cfg: &ScenarioConfig) -> Result<u64, String> {
    cfg.seed.ok_or_else(|| "seed missing".to_string())
}

fn params<P: serde::de::DeserializeOwned>(cfg: &ScenarioConfig) -> Result<P, String> {
    cfg.params().map_err(|v| v.to_string())
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}
