//! Run manifests: resolved configuration, seed and input digests written
//! next to every command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::run_config::RunConfig;

pub const FILE_NAME: &str = "manifest.toml";

/// Content hash in the style of a git blob id: SHA-256 over
/// `"blob <len>\0"` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub version: String,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), blob_hash(&bytes));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(FILE_NAME);
        let text = toml::to_string(self).context("serializing manifest")?;
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_blob_hash_is_stable() {
        // sha256("blob 0\0")
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
