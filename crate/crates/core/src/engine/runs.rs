//! Match runs: the episodes that training labels and round ground truth
//! derive from.

use serde::{Deserialize, Serialize};

use super::machine::StepOutcome;
use crate::state::PlanState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTerminal {
    Mismatch,
    TaskEnd,
}

/// Maximal sequence of speculated steps ending at a mismatch (inclusive) or
/// at task end. `states[i]` is the state the `i`-th step was taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRun {
    pub states: Vec<PlanState>,
    pub terminal: RunTerminal,
}

impl MatchRun {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_censored(&self) -> bool {
        self.terminal == RunTerminal::TaskEnd
    }

    /// Steps from `states[pos]` through the end of the run.
    pub fn steps_from(&self, pos: usize) -> usize {
        self.states.len() - pos
    }
}

/// Ground truth for a round once the run containing its start state closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundResolution {
    pub round_id: u64,
    pub issued_k: usize,
    /// Run length from the round's start state; for censored runs, the
    /// matched steps remaining to task end.
    pub optimal_k: usize,
    pub censored: bool,
}

/// Builds match runs incrementally as rounds commit steps.
#[derive(Debug, Default)]
pub struct RunTracker {
    states: Vec<PlanState>,
    rounds: Vec<(u64, usize, usize)>,
}

impl RunTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a speculative round starting at the current end of the run.
    pub fn round_started(&mut self, round_id: u64, issued_k: usize) {
        self.rounds.push((round_id, issued_k, self.states.len()));
    }

    /// Record one committed step taken from `from`. Returns the closed run and
    /// its resolved rounds when the step was a mismatch.
    pub fn push(&mut self, from: PlanState, outcome: &StepOutcome) -> Option<(MatchRun, Vec<RoundResolution>)> {
        self.states.push(from);
        if outcome.matched {
            None
        } else {
            Some(self.close(RunTerminal::Mismatch))
        }
    }

    /// Close any open run at task end, or when a sequential step breaks it.
    pub fn close_open(&mut self) -> Option<(MatchRun, Vec<RoundResolution>)> {
        if self.states.is_empty() && self.rounds.is_empty() {
            return None;
        }
        Some(self.close(RunTerminal::TaskEnd))
    }

    fn close(&mut self, terminal: RunTerminal) -> (MatchRun, Vec<RoundResolution>) {
        let run = MatchRun { states: std::mem::take(&mut self.states), terminal };
        let resolved = std::mem::take(&mut self.rounds)
            .into_iter()
            .map(|(round_id, issued_k, pos)| RoundResolution {
                round_id,
                issued_k,
                optimal_k: run.steps_from(pos),
                censored: run.is_censored(),
            })
            .collect();
        (run, resolved)
    }
}

/// Partition a task's committed steps into match runs.
///
/// `states[i]` is the state before step `i + 1` and `outcomes[i]` its
/// outcome. Sequential steps (no draft) belong to no run and break the
/// current one as censored.
pub fn extract_runs(states: &[PlanState], outcomes: &[StepOutcome]) -> Vec<MatchRun> {
    let mut runs = Vec::new();
    let mut current = Vec::new();
    for (s, o) in states.iter().zip(outcomes) {
        if o.approx_action.is_none() {
            if !current.is_empty() {
                runs.push(MatchRun { states: std::mem::take(&mut current), terminal: RunTerminal::TaskEnd });
            }
            continue;
        }
        current.push(s.clone());
        if !o.matched {
            runs.push(MatchRun { states: std::mem::take(&mut current), terminal: RunTerminal::Mismatch });
        }
    }
    if !current.is_empty() {
        runs.push(MatchRun { states: current, terminal: RunTerminal::TaskEnd });
    }
    runs
}
