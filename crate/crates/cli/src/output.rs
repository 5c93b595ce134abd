//! CSV tables and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use declab_core::C64;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// One CSV file: a `# units:` comment line, a header row, then data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub units: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, units: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            units: units.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# units: {}", self.units);
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

/// Shortest round-trip decimal; platform independent.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // fold -0 into 0
        "0".into()
    } else {
        format!("{x:?}")
    }
}

/// `re` and `im` cells of a complex value.
pub fn complex(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

/// Tables and annotations produced by one scenario.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<CsvTable>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl Artifacts {
    pub fn note(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.notes.insert(key.to_string(), value.into());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub scenario: String,
    pub config: serde_json::Value,
    pub duration_seconds: f64,
    pub files: Vec<FileDigest>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every table into `dir` and returns their digests in emission order.
pub fn write_tables(dir: &Path, tables: &[CsvTable]) -> std::io::Result<Vec<FileDigest>> {
    std::fs::create_dir_all(dir)?;
    tables
        .iter()
        .map(|t| {
            let text = t.render();
            let name = format!("{}.csv", t.name);
            std::fs::write(dir.join(&name), &text)?;
            Ok(FileDigest { path: name, bytes: text.len(), sha256: sha256_hex(text.as_bytes()) })
        })
        .collect()
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> std::io::Result<PathBuf> {
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Recomputes the digests listed in a manifest and returns the mismatching paths.
pub fn verify_digests(dir: &Path, files: &[FileDigest]) -> std::io::Result<Vec<String>> {
    let mut bad = Vec::new();
    for f in files {
        let bytes = std::fs::read(dir.join(&f.path))?;
        if sha256_hex(&bytes) != f.sha256 {
            bad.push(f.path.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_has_units_and_header() {
        let mut t = CsvTable::new("z", "t in 1/g", &["t", "re", "im"]);
        let [re, im] = complex(C64::new(0.5, -0.0));
        t.push(vec![num(1.0), re, im]);
        assert_eq!(t.render(), "# units: t in 1/g\nt,re,im\n1.0,0.5,0\n");
        assert_eq!(num(1e-20), "1e-20");
    }

    #[test]
    fn digests_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = CsvTable::new("a", "none", &["x"]);
        let files = write_tables(dir.path(), &[t]).unwrap();
        assert!(verify_digests(dir.path(), &files).unwrap().is_empty());
        std::fs::write(dir.path().join("a.csv"), "changed").unwrap();
        assert_eq!(verify_digests(dir.path(), &files).unwrap(), vec!["a.csv".to_string()]);
    }
}
