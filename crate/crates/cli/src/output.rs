//! Deterministic artifact emission: CSV tables, JSON documents, manifests.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OUT_DIR_ENV: &str = "FREPEL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "frepel-out";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that refuses paths escaping it.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(format!("cannot create output directory: {e}"), &root))?;
        Ok(Self { root, written: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&self, name: &str) -> CliResult<PathBuf> {
        let rel = Path::new(name);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(CliError::usage(format!("refusing to write outside the output directory: {name}")));
        }
        Ok(self.root.join(rel))
    }

    /// Write a data file and record its digest for the manifest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.target(name)?;
        std::fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write output: {e}"), &path))?;
        self.written.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.written
    }

    /// The manifest itself is not digested: it carries a timestamp.
    pub fn write_manifest(&self, manifest: &RunManifest) -> CliResult<PathBuf> {
        let path = self.target(MANIFEST_FILE)?;
        let mut text = serde_json::to_string_pretty(manifest).expect("manifests serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("cannot write manifest: {e}"), &path))?;
        Ok(path)
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved configuration of `command`.
    pub config: Value,
    pub seed: Option<u64>,
    pub timestamp: String,
    /// File name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>, out: &OutDir) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).expect("configs serialize"),
            seed,
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs: out.digests().clone(),
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read manifest: {e}"), path))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid manifest: {e}")))
    }
}

/// CSV text with a fixed header; cells are preformatted strings.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(header).expect("in-memory csv");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells).expect("in-memory csv");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.6390158215457884, 1e-300, -7.25e12] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn writes_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path().to_path_buf()).unwrap();
        assert!(out.write("../escape.csv", b"x").is_err());
        assert!(out.write("/tmp/escape.csv", b"x").is_err());
        out.write("ok.csv", b"a\n").unwrap();
        assert_eq!(out.digests()["ok.csv"], sha256_hex(b"a\n"));
    }
}
