//! Run manifest and completion record.

use std::path::Path;
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{HarnessError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPLETION_FILE: &str = "completion.json";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";
/// Version of the CSV column layouts documented in the book.
pub const CSV_SCHEMA: u32 = 1;

/// Files written under each seed directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outputs {
    pub seed_dirs: Vec<String>,
    pub episodes: String,
    pub progress: String,
    pub pretrain: String,
    pub feasibility_checkpoint: String,
    pub checkpoints: String,
    pub final_checkpoint: String,
    /// Holds the end timestamp so the manifest itself never changes.
    pub completion: String,
}

/// Written once before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub revision: String,
    pub package_version: String,
    pub seeds: Vec<u64>,
    /// Unix seconds.
    pub started: u64,
    pub csv_schema: u32,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: usize,
    pub episodes: usize,
    pub updates: u64,
    pub nonfinite_skips: usize,
    pub ratio_skips: usize,
    pub interventions: usize,
    pub projection_failures: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    /// Unix seconds.
    pub finished: u64,
    pub seeds: Vec<SeedSummary>,
}

pub fn seed_dir_name(seed: u64) -> String {
    format!("seed-{seed}")
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// `git rev-parse HEAD` of the working directory, or `unknown`.
pub fn revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        RunManifest {
            revision: revision(),
            package_version: env!("CARGO_PKG_VERSION").into(),
            seeds: config.run.seeds.clone(),
            started: now(),
            csv_schema: CSV_SCHEMA,
            outputs: Outputs {
                seed_dirs: config.run.seeds.iter().map(|&s| seed_dir_name(s)).collect(),
                episodes: "episodes.csv".into(),
                progress: "progress.csv".into(),
                pretrain: "pretrain.csv".into(),
                feasibility_checkpoint: "feasibility.ckpt".into(),
                checkpoints: "checkpoints".into(),
                final_checkpoint: "final".into(),
                completion: COMPLETION_FILE.into(),
            },
            config,
        }
    }

    /// Create `dir` and write the manifest and effective config. Refuses to
    /// overwrite an existing manifest.
    pub fn write_new(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            return Err(HarnessError::Config(format!("{} already holds a run; use --resume or a new directory", dir.display())));
        }
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))?;
        std::fs::write(dir.join(EFFECTIVE_CONFIG_FILE), self.config.to_toml())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = if dir.is_dir() { dir.join(MANIFEST_FILE) } else { dir.to_path_buf() };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        Ok(m)
    }
}
