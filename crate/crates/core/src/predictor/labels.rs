//! Training targets from match runs.

use super::features::featurize;
use super::model::ValueModel;
use crate::engine::MatchRun;
use crate::state::PlanState;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    pub state: PlanState,
    /// Steps from this state through the end of the run.
    pub label: usize,
}

/// Monte-Carlo labels: one unit of reward per step through the mismatch, so
/// the state at position `i` of a run of length `T` is labelled `T - i`.
/// Censored runs contribute only when `include_censored` is set, labelled
/// with the matched steps remaining.
pub fn label_runs(runs: &[MatchRun], include_censored: bool) -> Vec<LabeledState> {
    runs.iter()
        .filter(|r| include_censored || !r.is_censored())
        .flat_map(|r| {
            r.states.iter().enumerate().map(move |(i, s)| LabeledState { state: s.clone(), label: r.len() - i })
        })
        .collect()
}

/// λ-returns for every state of a run given the model's values of those
/// states, computed with the backward recursion
/// `G_t = 1 + γ((1 - λ) V(s_{t+1}) + λ G_{t+1})`, `G_{T-1} = 1`.
pub fn lambda_returns_from_values(values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[n - 1] = 1.0;
    for t in (0..n - 1).rev() {
        out[t] = 1.0 + gamma * ((1.0 - lambda) * values[t + 1] + lambda * out[t + 1]);
    }
    out
}

/// λ-returns of a run, bootstrapping on the model's current weights.
pub fn lambda_returns(run: &MatchRun, model: &ValueModel, gamma: f64, lambda: f64) -> Vec<f64> {
    let values: Vec<f64> = run.states.iter().map(|s| model.predict(&featurize(s, model.dimension))).collect();
    lambda_returns_from_values(&values, gamma, lambda)
}
