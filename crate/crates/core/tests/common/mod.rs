#![allow(dead_code)]

pub mod expectile;
pub mod timeline;

use proptest::prelude::*;
use specplan_core::agents::{StepScript, TaskTrace};
use specplan_core::engine::{KChoice, KPolicy, PolicyError};
use specplan_core::{Action, Millis, PlanState};

#[derive(Debug, Clone)]
pub struct StepSpec {
    pub matched: bool,
    pub approx_ms: u64,
    pub target_ms: u64,
    pub exec_ms: u64,
    pub tokens: [u64; 4],
}

pub fn step(matched: bool, approx_ms: u64, target_ms: u64, exec_ms: u64) -> StepSpec {
    StepSpec { matched, approx_ms, target_ms, exec_ms, tokens: [100, 10, 200, 50] }
}

pub fn build_trace(id: &str, specs: &[StepSpec]) -> TaskTrace {
    let steps = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let target = format!("tool-{i} arg");
            let approx = if s.matched { target.clone() } else { format!("tool-{i} other") };
            StepScript {
                target_action: Action::new(&target).unwrap(),
                approx_action: Action::new(&approx).unwrap(),
                approx_latency_ms: s.approx_ms,
                target_latency_ms: s.target_ms,
                exec_latency_ms: s.exec_ms,
                approx_prompt_tokens: s.tokens[0],
                approx_gen_tokens: s.tokens[1],
                target_prompt_tokens: s.tokens[2],
                target_gen_tokens: s.tokens[3],
                observation: format!("obs {i}"),
                difficulty_tag: "t".into(),
            }
        })
        .collect();
    TaskTrace { task_id: id.into(), task_prompt: format!("prompt {id}"), steps }
}

pub fn step_strategy(max_latency: u64) -> impl Strategy<Value = StepSpec> {
    (
        any::<bool>(),
        1..=max_latency,
        1..=max_latency,
        1..=max_latency,
        (0u64..500, 0u64..80, 0u64..900, 0u64..300),
    )
        .prop_map(|(matched, a, t, e, (ap, ag, tp, tg))| StepSpec {
            matched,
            approx_ms: a,
            target_ms: t,
            exec_ms: e,
            tokens: [ap, ag, tp, tg],
        })
}

/// Issues a scripted sequence of k values (cycled) with a fixed predictor latency.
pub struct ScriptedK {
    pub ks: Vec<usize>,
    pub latency_ms: Millis,
    next: usize,
}

impl ScriptedK {
    pub fn new(ks: Vec<usize>, latency_ms: Millis) -> Self {
        Self { ks, latency_ms, next: 0 }
    }
}

impl KPolicy for ScriptedK {
    fn name(&self) -> &str {
        "scripted"
    }

    fn choose_k(&mut self, _state: &PlanState, _now: Millis) -> Result<KChoice, PolicyError> {
        let k = self.ks[self.next % self.ks.len()];
        self.next += 1;
        Ok(KChoice { k, latency_ms: self.latency_ms })
    }
}
