//! Run manifest: the single index of every artifact a grid run produced.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub datasets: Vec<DatasetEntry>,
    pub cells: Vec<CellEntry>,
    pub tables: Vec<String>,
    pub plots: Vec<String>,
    pub total_wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub fingerprint: String,
    pub n: usize,
    pub d: usize,
    pub d_enc: usize,
    pub majority_rate: f64,
    pub model_path: String,
    pub worst_model_path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellEntry {
    pub id: String,
    pub dataset: String,
    pub method: String,
    pub baseline: String,
    pub perturbation: String,
    pub mode: String,
    pub trials: usize,
    pub seed: u64,
    pub status: CellStatus,
    pub result_path: String,
    pub curve_path: String,
    pub cached: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| ManifestError::Parse(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| ManifestError::Parse(e.to_string()))
    }

    pub fn failed_cells(&self) -> Vec<&CellEntry> {
        self.cells
            .iter()
            .filter(|c| !matches!(c.status, CellStatus::Ok))
            .collect()
    }
}
