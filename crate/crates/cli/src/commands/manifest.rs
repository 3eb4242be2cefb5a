//! Run manifests and shared filesystem helpers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Effective configuration after file plus flag overrides.
    pub config: serde_json::Value,
    /// Hash of the dataset directory consumed, when one was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    /// Paths written, relative to the manifest's directory where possible.
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::Value::Null,
            dataset_sha256: None,
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// SHA-256 over the dataset directory's files in a fixed order, each
/// prefixed by its name, so any byte change anywhere shows up.
pub fn hash_dataset_dir(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in [
        "worldspec.json",
        "vocab.json",
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
    ] {
        let path = dir.join(name);
        let bytes =
            fs::read(&path).with_context(|| format!("hashing {}", path.display()))?;
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Creates `dir` if missing. An existing directory that already holds a
/// manifest from an earlier run is refused unless `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            bail!(cycleground::Error::config(format!(
                "{} exists and is not a directory",
                dir.display()
            )));
        }
        if dir.join("manifest.json").exists() && !force {
            bail!(cycleground::Error::config(format!(
                "{} already holds run outputs; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Loads a configuration file, reporting parse problems as configuration
/// errors (exit code 2) rather than data errors.
pub fn load_config_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        cycleground::Error::config(format!("{}: {e}", path.display()))
    })?;
    let value = serde_json::from_str(&text).map_err(|e| {
        cycleground::Error::config(format!("{}: {e}", path.display()))
    })?;
    Ok(value)
}
