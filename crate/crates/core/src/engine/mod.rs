//! Draft-and-verify speculative planning.

pub mod machine;
pub mod recorder;
pub mod runs;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::agents::AgentError;
use crate::clock::Millis;
use crate::ledger::CallRecord;
use crate::state::PlanState;

pub use machine::{Command, ExecKind, RoundMachine, RoundOutcome, StepOutcome};
pub use recorder::TaskRecorder;
pub use runs::{extract_runs, MatchRun, RoundResolution, RunTerminal, RunTracker};
pub use sim::{cancel_record, run_task, TaskContext};

#[derive(Debug, Error)]
#[error("{0}")]
pub struct PolicyError(pub String);

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("backend failure at step {step}: {source}")]
    Backend {
        step: usize,
        #[source]
        source: AgentError,
        /// Ledger entries written before the failure.
        partial_ledger: Vec<CallRecord>,
    },
    #[error("policy failure: {0}")]
    Policy(#[from] PolicyError),
    #[error("round {round_id} stalled with no pending events")]
    Stalled { round_id: u64 },
}

/// What a policy decides at the start of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KChoice {
    /// Speculation step; 0 runs a sequential target-only step.
    pub k: usize,
    /// Time until `k` is known. Step 1 is drafted meanwhile; later steps wait.
    pub latency_ms: Millis,
}

impl KChoice {
    pub fn immediate(k: usize) -> Self {
        Self { k, latency_ms: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Feedback<'a> {
    RunClosed(&'a MatchRun),
    RoundResolved(RoundResolution),
}

/// Chooses the speculation step for each round.
pub trait KPolicy {
    fn name(&self) -> &str;
    /// `now_ms` is on a time base that keeps increasing across tasks.
    fn choose_k(&mut self, state: &PlanState, now_ms: Millis) -> Result<KChoice, PolicyError>;
    fn observe(&mut self, _feedback: Feedback<'_>, _now_ms: Millis) {}
}

impl<P: KPolicy + ?Sized> KPolicy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn choose_k(&mut self, state: &PlanState, now_ms: Millis) -> Result<KChoice, PolicyError> {
        (**self).choose_k(state, now_ms)
    }

    fn observe(&mut self, feedback: Feedback<'_>, now_ms: Millis) {
        (**self).observe(feedback, now_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundTerminal {
    Mismatch,
    /// Every drafted step matched and the task continues.
    Exhausted,
    /// Every drafted step matched and the task is complete.
    TaskEnd,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round_id: u64,
    pub task_id: String,
    pub start_step: usize,
    pub k: usize,
    pub k_effective: usize,
    pub matched_count: usize,
    pub terminal: RoundTerminal,
    pub start_ms: Millis,
    pub end_ms: Millis,
    /// Realized optimal k from the round's start state, when it speculated.
    pub optimal_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub task_id: String,
    /// Committed actions in step order.
    pub actions: Vec<Action>,
    pub outcomes: Vec<StepOutcome>,
    /// `states[i]` is the state step `i + 1` was taken from.
    pub states: Vec<PlanState>,
    pub final_state: PlanState,
    pub total_time_ms: Millis,
    pub ledger: Vec<CallRecord>,
    pub runs: Vec<MatchRun>,
    pub rounds: Vec<RoundLog>,
}

impl TaskResult {
    pub fn issued_ks(&self) -> impl Iterator<Item = usize> + '_ {
        self.rounds.iter().map(|r| r.k)
    }
}
