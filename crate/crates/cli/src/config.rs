//! Config files, data sources and config hashing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fairgse_core::data::{generate_synthetic, load_dataset, DatasetManifest, SynthSpec};
use fairgse_core::graph::WeightedGraph;
use fairgse_core::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "FAIRGSE_OUT";

pub fn default_out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Parse a JSON or TOML file (chosen by extension) into `T`. Unreadable or
/// malformed files are usage errors.
pub fn load_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
        _ => serde_json::from_str(&text).map_err(|e| e.to_string()),
    };
    Ok(parsed.map_err(|e| UsageError(format!("{}: {e}", path.display())))?)
}

/// Where a run's graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SynthSpec),
    /// Path to a dataset manifest (JSON or TOML).
    Manifest(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SynthSpec::default())
    }
}

impl DataSource {
    pub fn load(&self) -> Result<WeightedGraph> {
        match self {
            DataSource::Synthetic(spec) => Ok(generate_synthetic(spec)?),
            DataSource::Manifest(path) => {
                let m: DatasetManifest = load_file(path)?;
                let base = path.parent().unwrap_or(Path::new("."));
                load_dataset(&m, base).with_context(|| format!("loading dataset `{}`", m.name))
            }
        }
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub train: TrainConfig,
}

/// Hex SHA-256 of the value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize");
    hex::encode(Sha256::digest(&json))
}

pub fn short_hash(hash: &str) -> &str {
    &hash[..16.min(hash.len())]
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
