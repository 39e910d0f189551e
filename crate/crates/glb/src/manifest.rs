//! Run manifest: config echo, versions, timings, output checksums and the
//! state needed to resume a simulation.

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub dim: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
    pub stretch: String,
}

/// Everything `resume` needs beyond the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeState {
    pub t: f64,
    pub step: u64,
    pub dissipation_accum: f64,
    pub last_dtu_l2: f64,
    /// Field at `t`, relative path.
    pub current: String,
    /// Field one step earlier and the step length, when the two-step history exists.
    pub previous: Option<String>,
    pub dt_prev: Option<f64>,
    /// Number of snapshot files written so far.
    pub snapshots: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub tool_version: String,
    pub core_version: String,
    pub config: ExperimentConfig,
    pub grid: GridRecord,
    pub wall_time_s: f64,
    pub blowup: bool,
    pub blowup_reason: Option<String>,
    pub blowup_time: Option<f64>,
    pub resume: Option<ResumeState>,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let input = |msg: String| HarnessError::Input { path: path.to_path_buf(), msg };
        let text = std::fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| input(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// Re-hash every listed output; returns the mismatching paths.
    pub fn verify_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| checksum(&dir.join(&o.path)).map(|(h, _)| h != o.sha256).unwrap_or(true))
            .map(|o| o.path.clone())
            .collect()
    }
}

pub fn checksum(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

pub fn output_entry(dir: &Path, rel: &str) -> Result<OutputEntry> {
    let (sha256, bytes) = checksum(&dir.join(rel))?;
    Ok(OutputEntry { path: rel.to_string(), sha256, bytes })
}
