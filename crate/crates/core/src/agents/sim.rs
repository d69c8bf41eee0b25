//! Scripted backend that replays a [`TaskTrace`].

use std::collections::HashSet;

use super::{AgentError, CallReply, ExecReply, SimAgents};
use crate::action::Action;
use crate::agents::trace::TaskTrace;
use crate::ledger::Role;
use crate::state::PlanState;

/// Serves approx/target calls with scripted latency, tokens and actions.
///
/// Calls whose prefix has left the target trajectory (built on a rejected
/// draft) still cost the scripted tokens but return a divergent action, so an
/// engine that commits unverified work produces a visibly wrong plan.
pub struct SimBackend<'a> {
    trace: &'a TaskTrace,
    served_on_path: HashSet<(Role, usize)>,
}

impl<'a> SimBackend<'a> {
    pub fn new(trace: &'a TaskTrace) -> Self {
        Self { trace, served_on_path: HashSet::new() }
    }

    pub fn trace(&self) -> &TaskTrace {
        self.trace
    }

    fn on_path(&self, prefix: &PlanState) -> bool {
        prefix.actions().zip(&self.trace.steps).all(|(a, s)| *a == s.target_action)
            && prefix.step_index() <= self.trace.len()
    }
}

fn off_path(action: &Action) -> Action {
    Action::new(&format!("{action} [off-path]")).expect("non-empty")
}

impl SimAgents for SimBackend<'_> {
    fn task_prompt(&self) -> &str {
        &self.trace.task_prompt
    }

    fn horizon(&self) -> usize {
        self.trace.len()
    }

    fn call(&mut self, role: Role, prefix: &PlanState) -> Result<CallReply, AgentError> {
        let step = prefix.step_index() + 1;
        let script = self.trace.step(step)?;
        let on_path = self.on_path(prefix);
        if on_path && !self.served_on_path.insert((role, step)) {
            return Err(AgentError::StepOutOfRange { step, len: self.trace.len() });
        }
        let (prompt_tokens, gen_tokens) = script.tokens(role);
        let action = if on_path { script.action(role).clone() } else { off_path(script.action(role)) };
        Ok(CallReply { action, prompt_tokens, gen_tokens, latency_ms: script.latency(role) })
    }

    fn execute(&mut self, prefix: &PlanState, action: &Action) -> Result<ExecReply, AgentError> {
        let step = prefix.step_index() + 1;
        let script = self.trace.step(step)?;
        let observation = if self.on_path(prefix) && *action == script.target_action {
            script.observation.clone()
        } else {
            format!("unexpected result for `{action}`")
        };
        Ok(ExecReply { observation, latency_ms: script.exec_latency_ms })
    }
}
