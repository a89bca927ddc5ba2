//! Model snapshots on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingModel;
use crate::error::{Error, Result};
use crate::interactions::{read_json, write_json};
use crate::trainer::{TrainObserver, TrainState};

/// A model snapshot with its shape and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dim: usize,
    pub num_users: usize,
    pub num_items: usize,
    /// Completed epochs when the snapshot was taken.
    pub epoch: usize,
    /// Seed of the run; initialization and every epoch's shuffling derive from it.
    pub seed: u64,
    pub model: EmbeddingModel,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        Checkpoint::new(state.model.clone(), state.epoch)
    }

    pub fn new(model: EmbeddingModel, epoch: usize) -> Self {
        Checkpoint {
            dim: model.dim(),
            num_users: model.num_users(),
            num_items: model.num_items(),
            epoch,
            seed: model.seed(),
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    /// Reads a checkpoint and checks that the header matches the tables.
    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        let m = &ck.model;
        if m.user_table().ncols() != m.item_table().ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}: user and item tables differ in width",
                path.display()
            )));
        }
        if (ck.dim, ck.num_users, ck.num_items) != (m.dim(), m.num_users(), m.num_items()) {
            return Err(Error::DimensionMismatch(format!(
                "{}: header says {}x{} users/items at d={}, tables are {}x{} at d={}",
                path.display(),
                ck.num_users,
                ck.num_items,
                ck.dim,
                m.num_users(),
                m.num_items(),
                m.dim()
            )));
        }
        if let Some(enc) = m.feature_encoder() {
            if enc.weight.ncols() != ck.dim || enc.bias.len() != ck.dim {
                return Err(Error::DimensionMismatch(format!(
                    "{}: encoder output differs from d={}",
                    path.display(),
                    ck.dim
                )));
            }
        }
        if !m.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{}: checkpoint holds non-finite values",
                path.display()
            )));
        }
        Ok(ck)
    }
}

/// File name of the snapshot taken after `epoch`.
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.json")
}

/// Observer that writes a checkpoint into `dir` on every snapshot.
#[derive(Clone, Debug)]
pub struct CheckpointWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl CheckpointWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointWriter {
            dir: dir.into(),
            written: Vec::new(),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

impl TrainObserver for CheckpointWriter {
    fn on_snapshot(&mut self, state: &TrainState) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(checkpoint_file_name(state.epoch));
        Checkpoint::from_state(state).save(&path)?;
        self.written.push(path);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_model;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = init_model(3, 4, 5, 0.1, 9).unwrap().with_feature_encoder(2, 0.1).unwrap();
        let ck = Checkpoint::new(model, 7);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut ck = Checkpoint::new(init_model(3, 4, 5, 0.1, 9).unwrap(), 1);
        ck.num_items = 5;
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::DimensionMismatch(_))));
    }
}
