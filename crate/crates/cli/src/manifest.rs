use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dna::export::to_canonical_json;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Provenance record written next to a command's outputs, before them.
///
/// Everything except `started_at` is a function of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub map: Option<String>,
    /// SHA-256 of the canonical JSON of every input that shapes the outputs.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(subcommand: &str, map: Option<&Path>, inputs: &T, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            tool: "dna".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            map: map.map(|p| p.display().to_string()),
            config_hash: input_hash(inputs)?,
            seed,
            started_at: chrono::Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        })
    }

    pub fn with_outputs(mut self, outputs: &[&Path]) -> Self {
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &to_canonical_json(self)?)
    }
}

pub fn input_hash<T: Serialize>(inputs: &T) -> Result<String> {
    let text = to_canonical_json(inputs)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// `options.json` -> `options.manifest.json`; a directory gets `manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        output.with_extension("manifest.json")
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
