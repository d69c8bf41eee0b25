//! Live mode: agents behind an OpenAI-compatible chat-completions endpoint,
//! driven on the wall clock with the same round machine the simulator uses.

pub mod agents;
pub mod client;
pub mod driver;
pub mod mock;
pub mod prompt;

use std::path::PathBuf;

use specplan_core::engine::PolicyError;
use specplan_core::{CallRecord, Role};
use thiserror::Error;

pub use agents::{load_tasks, EchoExecutor, LiveAgents, LiveTask, RoleConfig, ToolExecutor};
pub use client::{parse_action, ChatClient, Completion, Progress, Usage};
pub use driver::{run_live_task, LiveOptions};
pub use prompt::PromptTemplate;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("malformed completion: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid task file {path}: {message}")]
    Tasks { path: PathBuf, message: String },
    #[error("policy failure: {0}")]
    Policy(#[from] PolicyError),
    #[error("{role:?} call for step {step} failed: {source}")]
    Step {
        step: usize,
        role: Role,
        #[source]
        source: Box<LiveError>,
        /// Ledger entries written before the failure.
        partial_ledger: Vec<CallRecord>,
    },
}
