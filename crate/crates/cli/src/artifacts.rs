//! Output files. Every artifact carries a `provenance` object; everything
//! written during a run is tracked so a failed run can remove it again.

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use noisespec_core::io::CsvTable;
use noisespec_core::PsdModel;

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "noisespec";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config: &Value) -> Self {
        let bytes = serde_json::to_vec(config).expect("config value serializes");
        Self {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_hash: hex::encode(Sha256::digest(&bytes)),
        }
    }
}

pub struct Artifacts {
    root: PathBuf,
    provenance: Value,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(root: PathBuf, provenance: &Provenance) -> Self {
        Self {
            root,
            provenance: serde_json::to_value(provenance).expect("provenance serializes"),
            files: Vec::new(),
            dirs: Vec::new(),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.files
    }

    fn prepare(&mut self, rel: &str) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            let mut missing = Vec::new();
            let mut p = parent.to_path_buf();
            while !p.exists() {
                missing.push(p.clone());
                match p.parent() {
                    Some(q) => p = q.to_path_buf(),
                    None => break,
                }
            }
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            self.dirs.extend(missing.into_iter().rev());
        }
        Ok(path)
    }

    fn put(&mut self, rel: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.prepare(rel)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// CSV with the provenance merged into the JSON header line.
    pub fn table(&mut self, rel: &str, mut table: CsvTable) -> CliResult<PathBuf> {
        let mut meta = match table.meta.take() {
            Some(Value::Object(m)) => m,
            Some(other) => {
                let mut m = Map::new();
                m.insert("meta".into(), other);
                m
            }
            None => Map::new(),
        };
        meta.insert("provenance".into(), self.provenance.clone());
        table.meta = Some(Value::Object(meta));
        self.put(rel, &table.render())
    }

    /// Pretty JSON object with a top-level `provenance` key.
    pub fn json<T: Serialize>(&mut self, rel: &str, body: &T) -> CliResult<PathBuf> {
        let mut obj = match serde_json::to_value(body)? {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("data".into(), other);
                m
            }
        };
        obj.insert("provenance".into(), self.provenance.clone());
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        self.put(rel, &text)
    }

    pub fn psd(&mut self, rel: &str, psd: &PsdModel, extra: Value) -> CliResult<PathBuf> {
        self.table(rel, psd_table(psd, extra))
    }

    /// Remove every file and directory this run created.
    pub fn cleanup(&mut self) {
        for f in self.files.drain(..).rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.drain(..).rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}

/// `omega_rad_s,S_rad2_per_hz` with tones in the header.
pub fn psd_table(psd: &PsdModel, extra: Value) -> CsvTable {
    let mut meta = match extra {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    meta.insert("tones".into(), json!(psd.tones()));
    let mut t = CsvTable::new(&["omega_rad_s", "S_rad2_per_hz"]).with_meta(Value::Object(meta));
    for row in psd.to_csv_rows() {
        t.push(row);
    }
    t
}
