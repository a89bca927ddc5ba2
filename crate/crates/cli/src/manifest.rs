use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ResolvedTrain;

/// Everything needed to rerun a command bit for bit, plus where its outputs went.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub config: ResolvedTrain,
    pub seeds: Seeds,
    pub synthetic: Option<SynthSettings>,
    pub dataset: DatasetSummary,
    pub epochs_completed: usize,
    /// Paths relative to the output directory.
    pub artifacts: Artifacts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Seeds {
    /// Table initialization and, on per-epoch streams, shuffling and negative sampling.
    pub train: u64,
    pub split: u64,
    pub synthetic: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub components: usize,
    pub users_per_component: usize,
    pub items_per_component: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub num_users: usize,
    pub num_items: usize,
    pub num_pairs: usize,
    pub train_pairs: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Artifacts {
    pub checkpoints: Vec<PathBuf>,
    pub diagnostics_csv: PathBuf,
    pub metrics_jsonl: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub report: PathBuf,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
