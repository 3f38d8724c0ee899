//! Run manifest: a config snapshot plus per-stage timestamps and digests.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::PipelineError;
use crate::seed::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Input path as given, mapped to its sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name inside the run directory, mapped to its sha256.
    pub outputs: BTreeMap<String, String>,
    pub backend_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub stages: Vec<StageRecord>,
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        let now = Utc::now();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            created_at: now,
            updated_at: now,
            stages: Vec::new(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Existing manifest with its config snapshot replaced, or a fresh one.
    pub fn open(run_dir: &Path, config: &RunConfig) -> Self {
        match Self::load(run_dir) {
            Ok(mut m) => {
                m.config = config.clone();
                m
            }
            Err(_) => Self::new(config),
        }
    }

    pub fn save(&mut self, run_dir: &Path) -> Result<(), PipelineError> {
        self.updated_at = Utc::now();
        let path = run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    /// Replaces any earlier record of the same stage.
    pub fn record(&mut self, stage: StageRecord) {
        self.stages.retain(|s| s.name != stage.name);
        self.stages.push(stage);
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Output files whose current digest differs from the recorded one.
    /// A missing file is reported too.
    pub fn verify(&self, run_dir: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for stage in &self.stages {
            for (name, digest) in &stage.outputs {
                match file_digest(&run_dir.join(name)) {
                    Ok(d) if &d == digest => {}
                    _ => bad.push(name.clone()),
                }
            }
        }
        bad
    }
}

/// Collects digests while a stage runs.
pub struct StageTimer {
    name: String,
    started_at: DateTime<Utc>,
    inputs: BTreeMap<String, String>,
}

impl StageTimer {
    pub fn start(name: &str) -> Self {
        Self {
            name: name.to_string(),
            started_at: Utc::now(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn finish(self, run_dir: &Path, outputs: &[&str], backend_calls: u64) -> Result<StageRecord, PipelineError> {
        let mut digests = BTreeMap::new();
        for name in outputs {
            digests.insert(name.to_string(), file_digest(&run_dir.join(name))?);
        }
        Ok(StageRecord {
            name: self.name,
            started_at: self.started_at,
            finished_at: Utc::now(),
            inputs: self.inputs,
            outputs: digests,
            backend_calls,
        })
    }
}
