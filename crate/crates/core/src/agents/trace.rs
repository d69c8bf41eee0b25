//! Scripted task traces: the ground truth the simulator replays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::action::Action;
use crate::clock::Millis;
use crate::ledger::{PriceTable, Role};

/// Per-step script: both agents' actions, latencies and token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScript {
    pub target_action: Action,
    pub approx_action: Action,
    pub approx_latency_ms: Millis,
    pub target_latency_ms: Millis,
    pub exec_latency_ms: Millis,
    pub approx_prompt_tokens: u64,
    pub approx_gen_tokens: u64,
    pub target_prompt_tokens: u64,
    pub target_gen_tokens: u64,
    pub observation: String,
    #[serde(default)]
    pub difficulty_tag: String,
}

impl StepScript {
    pub fn matches(&self) -> bool {
        self.approx_action == self.target_action
    }

    pub fn latency(&self, role: Role) -> Millis {
        match role {
            Role::Approx => self.approx_latency_ms,
            Role::Target => self.target_latency_ms,
        }
    }

    pub fn tokens(&self, role: Role) -> (u64, u64) {
        match role {
            Role::Approx => (self.approx_prompt_tokens, self.approx_gen_tokens),
            Role::Target => (self.target_prompt_tokens, self.target_gen_tokens),
        }
    }

    pub fn action(&self, role: Role) -> &Action {
        match role {
            Role::Approx => &self.approx_action,
            Role::Target => &self.target_action,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: String,
    pub task_prompt: String,
    pub steps: Vec<StepScript>,
}

impl TaskTrace {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.steps.is_empty() {
            return Err(AgentError::InvalidTrace(format!("task {} has no steps", self.task_id)));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.approx_latency_ms == 0 || s.target_latency_ms == 0 || s.exec_latency_ms == 0 {
                return Err(AgentError::InvalidTrace(format!(
                    "task {} step {}: latencies must be positive",
                    self.task_id,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Script for a 1-based step index.
    pub fn step(&self, step: usize) -> Result<&StepScript, AgentError> {
        step.checked_sub(1)
            .and_then(|i| self.steps.get(i))
            .ok_or(AgentError::StepOutOfRange { step, len: self.steps.len() })
    }

    /// Run lengths of the target trajectory: maximal match runs ending at a
    /// mismatch (inclusive), with a trailing run closed by the task end.
    pub fn optimal_run_lengths(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = 0;
        for s in &self.steps {
            current += 1;
            if !s.matches() {
                runs.push(current);
                current = 0;
            }
        }
        if current > 0 {
            runs.push(current);
        }
        runs
    }

    /// Optimal speculation step from the state before each 1-based step.
    pub fn optimal_k_from(&self, step: usize) -> usize {
        let mut k = 0;
        for s in &self.steps[step - 1..] {
            k += 1;
            if !s.matches() {
                break;
            }
        }
        k
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)?;
        let trace: TaskTrace = serde_json::from_str(&text)?;
        trace.validate()?;
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Token totals of one task split by role and kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTally {
    pub approx_prompt: u64,
    pub approx_gen: u64,
    pub target_prompt: u64,
    pub target_gen: u64,
}

impl TokenTally {
    pub fn add(&mut self, role: Role, prompt: u64, gen: u64) {
        match role {
            Role::Approx => {
                self.approx_prompt += prompt;
                self.approx_gen += gen;
            }
            Role::Target => {
                self.target_prompt += prompt;
                self.target_gen += gen;
            }
        }
    }

    pub fn total_prompt(&self) -> u64 {
        self.approx_prompt + self.target_prompt
    }

    pub fn total_gen(&self) -> u64 {
        self.approx_gen + self.target_gen
    }

    pub fn total(&self) -> u64 {
        self.total_prompt() + self.total_gen()
    }

    pub fn prompt_cost(&self, prices: &PriceTable) -> f64 {
        prices.cost(Role::Approx, self.approx_prompt, 0) + prices.cost(Role::Target, self.target_prompt, 0)
    }

    pub fn gen_cost(&self, prices: &PriceTable) -> f64 {
        prices.cost(Role::Approx, 0, self.approx_gen) + prices.cost(Role::Target, 0, self.target_gen)
    }

    pub fn cost(&self, prices: &PriceTable) -> f64 {
        self.prompt_cost(prices) + self.gen_cost(prices)
    }
}

impl std::ops::Add for TokenTally {
    type Output = TokenTally;

    fn add(self, o: TokenTally) -> TokenTally {
        TokenTally {
            approx_prompt: self.approx_prompt + o.approx_prompt,
            approx_gen: self.approx_gen + o.approx_gen,
            target_prompt: self.target_prompt + o.target_prompt,
            target_gen: self.target_gen + o.target_gen,
        }
    }
}

impl std::iter::Sum for TokenTally {
    fn sum<I: Iterator<Item = TokenTally>>(iter: I) -> Self {
        iter.fold(TokenTally::default(), |a, b| a + b)
    }
}

/// Costs of the non-speculative reference executions of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineCosts {
    /// Target-only sequential completion time.
    pub time_ms: Millis,
    /// Approx-sequential plus target-sequential token totals.
    pub tokens: TokenTally,
    pub prompt_cost: f64,
    pub gen_cost: f64,
}

pub fn sequential_baseline(trace: &TaskTrace, prices: &PriceTable) -> BaselineCosts {
    let mut tokens = TokenTally::default();
    let mut time_ms = 0;
    for s in &trace.steps {
        time_ms += s.target_latency_ms + s.exec_latency_ms;
        tokens.add(Role::Approx, s.approx_prompt_tokens, s.approx_gen_tokens);
        tokens.add(Role::Target, s.target_prompt_tokens, s.target_gen_tokens);
    }
    BaselineCosts { time_ms, tokens, prompt_cost: tokens.prompt_cost(prices), gen_cost: tokens.gen_cost(prices) }
}
