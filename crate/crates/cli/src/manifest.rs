use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything a run reads and writes, hashed, plus the knobs it ran with.
pub struct RunRecord {
    subcommand: &'static str,
    seed: Option<u64>,
    config: Map<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    out_dir: PathBuf,
}

impl RunRecord {
    pub fn new(subcommand: &'static str, out_dir: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Input(format!("{}: {e}", out_dir.display())))?;
        Ok(Self {
            subcommand,
            seed,
            config: Map::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    /// Read an input file and record its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Input(format!("{name}: {e}"));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Input(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }

    pub fn finish(self) -> Result<(), CliError> {
        let doc = json!({
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config": Value::Object(self.config),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("manifest is plain JSON");
        text.push('\n');
        let path = self.out_dir.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Shortest round-trip representation; empty for a missing value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
