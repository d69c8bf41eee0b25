//! The inference-side model slot and checkpoint files.

use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::model::{Hyperparams, ValueModel};
use super::PredictorError;

/// Holds the model that predictions read. Swaps replace the whole model at
/// once, so a reader sees one version in full.
#[derive(Debug)]
pub struct CheckpointSlot {
    current: RwLock<Arc<ValueModel>>,
}

impl CheckpointSlot {
    pub fn new(model: ValueModel) -> Self {
        Self { current: RwLock::new(Arc::new(model)) }
    }

    pub fn current(&self) -> Arc<ValueModel> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn version(&self) -> u64 {
        self.current().version
    }

    /// Install a newer model. Versions must strictly increase.
    pub fn swap(&self, model: Arc<ValueModel>) -> Result<u64, PredictorError> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        if model.version <= guard.version {
            return Err(PredictorError::StaleCheckpoint { current: guard.version, offered: model.version });
        }
        let v = model.version;
        *guard = model;
        Ok(v)
    }

    /// Value and the version it was computed with.
    pub fn predict(&self, x: &FeatureVector) -> (f64, u64) {
        let m = self.current();
        (m.predict(x), m.version)
    }
}

/// On-disk checkpoint; weights are stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub version: u64,
    pub dimension: usize,
    pub weights: Vec<(u32, f64)>,
    pub bias: f64,
    pub hyper: Hyperparams,
}

impl From<&ValueModel> for CheckpointFile {
    fn from(m: &ValueModel) -> Self {
        let weights =
            m.weights.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i as u32, *w)).collect();
        Self { version: m.version, dimension: m.dimension, weights, bias: m.bias, hyper: m.hyper.clone() }
    }
}

impl TryFrom<CheckpointFile> for ValueModel {
    type Error = PredictorError;

    fn try_from(f: CheckpointFile) -> Result<Self, PredictorError> {
        let mut weights = vec![0.0; f.dimension];
        for (i, w) in f.weights {
            *weights.get_mut(i as usize).ok_or_else(|| {
                PredictorError::Hyperparams(format!("weight index {i} outside dimension {}", f.dimension))
            })? = w;
        }
        Ok(ValueModel { version: f.version, dimension: f.dimension, weights, bias: f.bias, hyper: f.hyper })
    }
}

pub fn save_checkpoint(model: &ValueModel, path: &Path) -> Result<(), PredictorError> {
    std::fs::write(path, serde_json::to_string(&CheckpointFile::from(model))?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ValueModel, PredictorError> {
    let f: CheckpointFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    f.try_into()
}
