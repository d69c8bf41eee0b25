//! Linear state-value model trained with an expectile loss.

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, DEFAULT_DIMENSION};
use super::PredictorError;

/// Learning rate the linear model uses by default.
pub const LINEAR_LR: f64 = 0.05;
/// Learning rate for plug-in transformer value models.
pub const TRANSFORMER_LR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Expectile level.
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub buffer_capacity: usize,
    /// Offset added to the rounded prediction.
    pub beta: i64,
    /// k issued before the first training pass.
    pub warmup_k: usize,
    /// Train on runs cut off by task end, labelled with their matched count.
    pub include_censored: bool,
    pub dimension: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            lambda: 0.95,
            gamma: 1.0,
            lr: LINEAR_LR,
            batch: 16,
            epochs: 3,
            buffer_capacity: 2500,
            beta: 0,
            warmup_k: 1,
            include_censored: false,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl Hyperparams {
    /// Supervised variant: λ = 1 and γ = 1 make the training targets the
    /// Monte-Carlo run lengths.
    pub fn sft() -> Self {
        Self { lambda: 1.0, gamma: 1.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: String| Err(PredictorError::Hyperparams(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must be in (0, 1), got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch == 0 || self.epochs == 0 || self.buffer_capacity == 0 || self.dimension == 0 {
            return bad("batch, epochs, buffer_capacity and dimension must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub version: u64,
    pub dimension: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: Hyperparams,
}

impl ValueModel {
    pub fn new(hyper: Hyperparams) -> Self {
        Self { version: 0, dimension: hyper.dimension, weights: vec![0.0; hyper.dimension], bias: 0.0, hyper }
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn is_trained(&self) -> bool {
        self.version > 0
    }

    /// One gradient step on the mean expectile loss of `batch`, with all
    /// gradients taken at the current weights.
    pub fn sgd_step(&mut self, batch: &[(&FeatureVector, f64)], tau: f64, lr: f64) {
        if batch.is_empty() {
            return;
        }
        let grads: Vec<f64> = batch.iter().map(|(x, y)| expectile_loss(y - self.predict(x), tau).1).collect();
        let scale = lr / batch.len() as f64;
        for ((x, _), g) in batch.iter().zip(&grads) {
            if *g == 0.0 {
                continue;
            }
            for &(i, v) in &x.entries {
                self.weights[i as usize] -= scale * g * v;
            }
            self.bias -= scale * g;
        }
    }
}

/// Asymmetric squared loss of residual `u = target - prediction`, and its
/// derivative with respect to the prediction.
pub fn expectile_loss(u: f64, tau: f64) -> (f64, f64) {
    let w = if u < 0.0 { (tau - 1.0).abs() } else { tau };
    (w * u * u, -2.0 * w * u)
}

/// Round half up, add the offset, clamp at 1. An untrained model issues the
/// warmup k instead.
pub fn predict_k(value: f64, trained: bool, hyper: &Hyperparams) -> usize {
    if !trained {
        return hyper.warmup_k;
    }
    let k_hat = (value + 0.5).floor();
    let k = k_hat + hyper.beta as f64;
    if k < 1.0 { 1 } else { k.min(1e6) as usize }
}
