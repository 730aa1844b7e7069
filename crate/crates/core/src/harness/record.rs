//! Provenance written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SemfiError};

pub const RUN_RECORD_FILE: &str = "run_record.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Input label to content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub version: String,
}

impl RunRecord {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        RunRecord {
            command: command.into(),
            config_hash,
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn input(mut self, label: &str, path: &Path) -> Result<Self> {
        self.inputs.insert(label.into(), content_hash(path)?);
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_RECORD_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| SemfiError::io(&path, e))
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| SemfiError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Hash of a file, or of a directory tree as sorted `relative-path hash` lines.
/// Run records are skipped so that hashing an output directory is stable.
pub fn content_hash(path: &Path) -> Result<String> {
    if path.is_file() {
        return file_hash(path);
    }
    let mut lines = Vec::new();
    collect(path, path, &mut lines)?;
    lines.sort();
    Ok(hex::encode(Sha256::digest(lines.join("\n").as_bytes())))
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| SemfiError::io(dir, e))?;
    for entry in entries {
        let p = entry.map_err(|e| SemfiError::io(dir, e))?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != RUN_RECORD_FILE) {
            let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            out.push(format!("{rel} {}", file_hash(&p)?));
        }
    }
    Ok(())
}
