use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};

/// Provenance record written next to every run's artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the canonical (post-override) scenario TOML.
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, canonical_config: &str, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: config_hash(canonical_config),
            seed,
            artifacts: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(|e| io_error(path, e))
    }
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
