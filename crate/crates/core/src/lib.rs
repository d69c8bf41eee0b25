//! Speculative planning for dual-agent LLM pipelines: a draft-and-verify
//! engine, a deterministic simulator, an online speculation-step predictor,
//! baseline policies and cost/latency metrics.

pub mod action;
pub mod agents;
pub mod baselines;
pub mod clock;
pub mod engine;
pub mod ledger;
pub mod metrics;
pub mod predictor;
pub mod state;

pub use action::{normalize_action, verify, Action, ActionError, ExactMatch, MatchPredicate};
pub use clock::{Millis, VirtualClock};
pub use ledger::{call_cost, CallRecord, CallStatus, PriceTable, Role};
pub use state::PlanState;
