//! Non-learned and non-contextual k policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Millis;
use crate::engine::{Feedback, KChoice, KPolicy, PolicyError};
use crate::predictor::{DynamicPolicy, Hyperparams, PredictorError};
use crate::state::PlanState;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("fixed k must be at least 1")]
    ZeroK,
    #[error("epsilon must be in [0, 1], got {0}")]
    Epsilon(f64),
    #[error("bandit needs at least one arm")]
    NoArms,
}

#[derive(Debug, Clone)]
pub struct FixedK {
    k: usize,
    name: String,
}

impl FixedK {
    pub fn new(k: usize) -> Result<Self, BaselineError> {
        if k == 0 {
            return Err(BaselineError::ZeroK);
        }
        Ok(Self { k, name: format!("fixed-k{k}") })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl KPolicy for FixedK {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose_k(&mut self, _state: &PlanState, _now_ms: Millis) -> Result<KChoice, PolicyError> {
        Ok(KChoice::immediate(self.k))
    }
}

/// Target-only execution: every round is a single sequential step.
#[derive(Debug, Clone, Default)]
pub struct Sequential;

impl KPolicy for Sequential {
    fn name(&self) -> &str {
        "sequential"
    }

    fn choose_k(&mut self, _state: &PlanState, _now_ms: Millis) -> Result<KChoice, PolicyError> {
        Ok(KChoice::immediate(0))
    }
}

/// Supervised variant of the learned policy: Monte-Carlo run lengths as
/// targets (λ = 1, γ = 1), everything else as in `base`.
pub fn sft_policy(name: impl Into<String>, base: Hyperparams, seed: u64) -> Result<DynamicPolicy, PredictorError> {
    DynamicPolicy::new(name, Hyperparams { lambda: 1.0, gamma: 1.0, ..base }, seed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub sum: f64,
    pub count: u64,
}

impl ArmStats {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Reward for choosing `k` when the realized run length was `k_star`.
pub fn bo_reward(k: usize, k_star: usize) -> f64 {
    1.0 / (k.abs_diff(k_star) as f64 + 1.0)
}

/// ε-greedy choice over arms `1..=arms.len()`. Unexplored arms rank first;
/// ties go to the smaller k.
pub fn bo_select(arms: &[ArmStats], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    if rng.gen_bool(epsilon) {
        return rng.gen_range(1..=arms.len());
    }
    let score = |a: &ArmStats| a.mean().unwrap_or(f64::INFINITY);
    let mut best = 0;
    for i in 1..arms.len() {
        if score(&arms[i]) > score(&arms[best]) {
            best = i;
        }
    }
    best + 1
}

pub fn bo_update(arms: &mut [ArmStats], k: usize, k_star: usize) {
    let a = &mut arms[k - 1];
    a.sum += bo_reward(k, k_star);
    a.count += 1;
}

/// Non-contextual bandit over k. An arm is credited once the run holding its
/// round's start state ends in a mismatch; rounds whose run is cut off by
/// task end are not credited.
#[derive(Debug, Clone)]
pub struct BoPolicy {
    name: String,
    arms: Vec<ArmStats>,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl BoPolicy {
    pub fn new(name: impl Into<String>, k_max: usize, epsilon: f64, seed: u64) -> Result<Self, BaselineError> {
        if k_max == 0 {
            return Err(BaselineError::NoArms);
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(BaselineError::Epsilon(epsilon));
        }
        Ok(Self { name: name.into(), arms: vec![ArmStats::default(); k_max], epsilon, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }
}

impl KPolicy for BoPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose_k(&mut self, _state: &PlanState, _now_ms: Millis) -> Result<KChoice, PolicyError> {
        Ok(KChoice::immediate(bo_select(&self.arms, self.epsilon, &mut self.rng)))
    }

    fn observe(&mut self, feedback: Feedback<'_>, _now_ms: Millis) {
        if let Feedback::RoundResolved(r) = feedback {
            if !r.censored && (1..=self.arms.len()).contains(&r.issued_k) {
                bo_update(&mut self.arms, r.issued_k, r.optimal_k);
            }
        }
    }
}
