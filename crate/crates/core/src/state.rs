//! Plan states: the task prompt plus the committed (action, observation) history.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("step_index {step_index} does not match {committed} committed steps")]
    StepIndexMismatch { step_index: usize, committed: usize },
    #[error("malformed plan state: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Committed {
    pub action: Action,
    pub observation: String,
}

/// Token-sequence state of a planning episode.
///
/// States are persistent values: [`PlanState::append`] returns a new state and
/// leaves the receiver untouched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPlanState")]
pub struct PlanState {
    task_prompt: String,
    committed: Vec<Committed>,
    step_index: usize,
}

#[derive(Deserialize)]
struct RawPlanState {
    task_prompt: String,
    committed: Vec<Committed>,
    step_index: usize,
}

impl TryFrom<RawPlanState> for PlanState {
    type Error = StateError;

    fn try_from(raw: RawPlanState) -> Result<Self, Self::Error> {
        if raw.step_index != raw.committed.len() {
            return Err(StateError::StepIndexMismatch {
                step_index: raw.step_index,
                committed: raw.committed.len(),
            });
        }
        Ok(Self { task_prompt: raw.task_prompt, committed: raw.committed, step_index: raw.step_index })
    }
}

impl PlanState {
    pub fn new(task_prompt: impl Into<String>) -> Self {
        Self { task_prompt: task_prompt.into(), committed: Vec::new(), step_index: 0 }
    }

    pub fn task_prompt(&self) -> &str {
        &self.task_prompt
    }

    pub fn committed(&self) -> &[Committed] {
        &self.committed
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn last(&self) -> Option<&Committed> {
        self.committed.last()
    }

    pub fn append(&self, action: Action, observation: impl Into<String>) -> PlanState {
        let mut next = self.clone();
        next.committed.push(Committed { action, observation: observation.into() });
        next.step_index += 1;
        next
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.committed.iter().map(|c| &c.action)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StateError> {
        let raw: RawPlanState = serde_json::from_str(text)?;
        raw.try_into()
    }

    /// Human-readable history used for prompts and featurization.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.task_prompt.len() + 64 * self.committed.len());
        out.push_str(&self.task_prompt);
        out.push('\n');
        for (i, c) in self.committed.iter().enumerate() {
            let _ = writeln!(out, "step {}: {}", i + 1, c.action);
            let _ = writeln!(out, "observation: {}", c.observation);
        }
        out
    }

    /// History lines only, without the task prompt.
    pub fn render_history(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.committed.iter().enumerate() {
            let _ = writeln!(out, "step {}: {}", i + 1, c.action);
            let _ = writeln!(out, "observation: {}", c.observation);
        }
        out
    }
}
