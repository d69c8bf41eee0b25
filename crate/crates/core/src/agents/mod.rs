//! Approximation and target agents, and the scripted backends that stand in
//! for them in simulation.

pub mod generator;
pub mod sim;
pub mod trace;

use thiserror::Error;

use crate::action::Action;
use crate::clock::Millis;
use crate::ledger::Role;
use crate::state::PlanState;

pub use generator::{generate_tasks, workload_stats, GeneratorConfig, GeneratorStats, PhaseSpec};
pub use sim::SimBackend;
pub use trace::{sequential_baseline, BaselineCosts, StepScript, TaskTrace, TokenTally};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("step {step} is out of range for a trace of {len} steps")]
    StepOutOfRange { step: usize, len: usize },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallReply {
    pub action: Action,
    pub prompt_tokens: u64,
    pub gen_tokens: u64,
    pub latency_ms: Millis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecReply {
    pub observation: String,
    pub latency_ms: Millis,
}

/// Agents as seen by the simulated engine: every reply carries the latency
/// it would have taken, and the engine schedules it on a virtual clock.
pub trait SimAgents {
    fn task_prompt(&self) -> &str;
    /// Number of steps the task runs for.
    fn horizon(&self) -> usize;
    fn call(&mut self, role: Role, prefix: &PlanState) -> Result<CallReply, AgentError>;
    fn execute(&mut self, prefix: &PlanState, action: &Action) -> Result<ExecReply, AgentError>;
}
