//! Per-invocation run manifests.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use perc_core::rng::{mix64, RNG_VERSION};
use perc_core::Result;
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA: &str = "perc-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub run_id: String,
    pub tool: String,
    pub tool_version: String,
    pub rng: String,
    pub subcommand: String,
    /// Effective command line after config merging, with an explicit seed.
    pub argv: Vec<String>,
    pub parameters: serde_json::Value,
    pub graph: serde_json::Value,
    pub seed: u64,
    pub budgets: serde_json::Value,
    pub workers: usize,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc_provenance: Option<String>,
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `YYYYmmddTHHMMSS.ffffffZ-<hash>`, the hash derived from the seed.
pub fn make_run_id(at: DateTime<Utc>, seed: u64) -> String {
    format!("{}-{:08x}", at.format("%Y%m%dT%H%M%S%.6fZ"), mix64(seed) as u32)
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, seed: u64, workers: usize) -> Self {
        let started = Utc::now();
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            run_id: make_run_id(started, seed),
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_VERSION.to_string(),
            subcommand: subcommand.to_string(),
            argv,
            parameters: serde_json::Value::Null,
            graph: serde_json::Value::Null,
            seed,
            budgets: serde_json::Value::Null,
            workers,
            started,
            finished: None,
            outputs: Vec::new(),
            pc_provenance: None,
            exit_code: None,
            error: None,
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|p| p == path) {
            self.outputs.push(path.to_path_buf());
        }
    }

    /// Drops listed outputs that do not exist on disk.
    pub fn prune_outputs(&mut self) {
        self.outputs.retain(|p| p.exists());
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if m.schema != MANIFEST_SCHEMA {
        return Err(perc_core::Error::Input(format!("unsupported manifest schema {}", m.schema)));
    }
    Ok(m)
}
