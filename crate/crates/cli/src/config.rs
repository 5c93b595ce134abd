//! Scenario configuration files.
//!
//! ```toml
//! scenario = "grw"
//! seed = 42
//! out = "runs/grw"
//!
//! [params]
//! preset = "paper-macroscopic"
//! t_end = 2.0
//! ```
//!
//! `--set key=value` overrides a top-level key (`seed`, `out`, `scenario`) or,
//! for anything else, a key under `[params]`. Dotted keys address nested tables.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::scenarios::{self, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Table,
    /// Directory relative paths inside `params` resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

const TOP_LEVEL: [&str; 3] = ["scenario", "seed", "out"];

fn override_value(raw: &str) -> Value {
    // parse as a TOML value, falling back to a bare string
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Table, spec: &str) -> Result<(), Violation> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Violation::new(spec, "override must look like key=value"))?;
    let key = key.trim();
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Violation::new(key, "empty key segment"));
    }
    if !TOP_LEVEL.contains(&parts[0]) && parts[0] != "params" {
        parts.insert(0, "params");
    }
    let last = parts.pop().expect("at least one segment");
    let mut table = root;
    for p in &parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Violation::new(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), override_value(raw.trim()));
    Ok(())
}

impl ScenarioConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, Vec<Violation>> {
        let mut root: Table = toml::from_str(text).map_err(|e| vec![Violation::new("<file>", e.message())])?;
        let errs: Vec<Violation> = overrides.iter().filter_map(|o| apply_override(&mut root, o).err()).collect();
        if !errs.is_empty() {
            return Err(errs);
        }
        Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| vec![Violation::new("<config>", e.message())])
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Vec<Violation>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![Violation::new(path.display().to_string(), e.to_string())])?;
        let mut cfg = Self::parse(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn kind(&self) -> Result<Scenario, Violation> {
        self.scenario.parse().map_err(|_| {
            Violation::new("scenario", format!("unknown scenario `{}`, expected one of {}", self.scenario, scenarios::names().join(", ")))
        })
    }

    /// Deserializes `[params]` into a scenario parameter struct.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P, Violation> {
        Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Violation::new("params", e.message()))
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Every schema violation, without running anything.
    pub fn validate(&self) -> Vec<Violation> {
        match self.kind() {
            Ok(kind) => scenarios::validate(kind, self),
            Err(v) => vec![v],
        }
    }
}

/// Range check helper shared by the scenario validators.
pub(crate) fn require(out: &mut Vec<Violation>, ok: bool, path: &str, message: &str) {
    if !ok {
        out.push(Violation::new(format!("params.{path}"), message));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let cfg = ScenarioConfig::parse(
            "scenario = \"spinbath\"\nseed = 1\n[params]\nn = 4\n",
            &["n=6".into(), "seed=9".into(), "grid.dx=0.1".into(), "label=abc".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.params["n"].as_integer(), Some(6));
        assert_eq!(cfg.params["grid"]["dx"].as_float(), Some(0.1));
        assert_eq!(cfg.params["label"].as_str(), Some("abc"));
        assert!(ScenarioConfig::parse("scenario = \"x\"", &["novalue".into()]).is_err());
    }

    #[test]
    fn unknown_top_level_key() {
        assert!(ScenarioConfig::parse("scenario = \"grw\"\ncolour = 1\n", &[]).is_err());
    }

    #[test]
    fn unknown_scenario() {
        let cfg = ScenarioConfig::parse("scenario = \"teleport\"\n", &[]).unwrap();
        let v = cfg.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "scenario");
    }
}
