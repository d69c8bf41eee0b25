//! Online speculation-step predictor: a featurized value model trained with
//! an expectile TD(λ) loss on match runs.

pub mod checkpoint;
pub mod features;
pub mod labels;
pub mod model;
pub mod policy;
pub mod train;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointFile, CheckpointSlot};
pub use features::{featurize, FeatureVector, DEFAULT_DIMENSION};
pub use labels::{label_runs, lambda_returns, lambda_returns_from_values, LabeledState};
pub use model::{expectile_loss, predict_k, Hyperparams, ValueModel, LINEAR_LR, TRANSFORMER_LR};
pub use policy::{BackgroundTrainer, DynamicPolicy, SimTrainer};
pub use train::{examples_from_run, train_pass, ReplayBuffer, RunFeatures, TrainingExample};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("checkpoint version {offered} is not newer than {current}")]
    StaleCheckpoint { current: u64, offered: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
