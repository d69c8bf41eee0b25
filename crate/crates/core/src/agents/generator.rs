//! Seeded synthetic workloads with a learnable difficulty signal.
//!
//! A task is a sequence of phases. Inside a phase every step's draft matches
//! the target independently with the phase's match probability, and the
//! phase tag is written verbatim into each step's observation, so a
//! contextual predictor can learn how long the current run is likely to last.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::{StepScript, TaskTrace};
use super::AgentError;
use crate::action::Action;
use crate::ledger::PriceTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub tag: String,
    pub match_probability: f64,
    /// Mean number of steps spent in the phase before switching.
    pub mean_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub min: u64,
    pub max: u64,
}

impl UniformRange {
    pub const fn new(min: u64, max: u64) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(self.min..=self.max)
    }
}

/// Prompt size that grows with the trajectory: `base + per_step * (step - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenGrowth {
    pub base: u64,
    pub per_step: u64,
}

impl TokenGrowth {
    pub fn at(&self, step: usize) -> u64 {
        self.base + self.per_step * (step as u64 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_tasks: usize,
    pub min_steps: usize,
    pub max_steps: usize,
    pub phases: Vec<PhaseSpec>,
    pub approx_latency_ms: UniformRange,
    pub target_latency_ms: UniformRange,
    pub exec_latency_ms: UniformRange,
    pub approx_prompt: TokenGrowth,
    pub target_prompt: TokenGrowth,
    pub approx_gen: UniformRange,
    pub target_gen: UniformRange,
    pub prices: PriceTable,
}

impl Default for GeneratorConfig {
    /// Calibrated workload: per-task mean max/min optimal k of about 3.3/1.6
    /// over 312 tasks. Two regimes, a predictable lookup stretch and a long
    /// ambiguous stretch where the draft almost never agrees.
    fn default() -> Self {
        Self {
            seed: 7,
            n_tasks: 312,
            min_steps: 4,
            max_steps: 11,
            phases: vec![
                PhaseSpec { tag: "phase:lookup".into(), match_probability: 0.98, mean_length: 4.0 },
                PhaseSpec { tag: "phase:ambiguous".into(), match_probability: 0.01, mean_length: 8.0 },
            ],
            approx_latency_ms: UniformRange::new(500, 900),
            target_latency_ms: UniformRange::new(3000, 5000),
            exec_latency_ms: UniformRange::new(100, 300),
            approx_prompt: TokenGrowth { base: 900, per_step: 250 },
            target_prompt: TokenGrowth { base: 1800, per_step: 400 },
            approx_gen: UniformRange::new(15, 40),
            target_gen: UniformRange::new(120, 260),
            prices: PriceTable::gpt_4_1_mini(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::Config(msg));
        if self.phases.is_empty() {
            return bad("at least one phase is required".into());
        }
        for p in &self.phases {
            if !(0.0..=1.0).contains(&p.match_probability) {
                return bad(format!("phase {}: match_probability {} outside [0, 1]", p.tag, p.match_probability));
            }
            if !(p.mean_length >= 1.0) {
                return bad(format!("phase {}: mean_length must be >= 1", p.tag));
            }
        }
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return bad(format!("invalid step range {}..={}", self.min_steps, self.max_steps));
        }
        for (name, r) in [
            ("approx_latency_ms", self.approx_latency_ms),
            ("target_latency_ms", self.target_latency_ms),
            ("exec_latency_ms", self.exec_latency_ms),
        ] {
            if r.min == 0 || r.min > r.max {
                return bad(format!("{name}: need 0 < min <= max, got {}..={}", r.min, r.max));
            }
        }
        for (name, r) in [("approx_gen", self.approx_gen), ("target_gen", self.target_gen)] {
            if r.min > r.max {
                return bad(format!("{name}: min > max"));
            }
        }
        self.prices.validate().map_err(|e| AgentError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub tag: String,
    pub configured_probability: f64,
    pub steps: usize,
    pub matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub n_tasks: usize,
    pub total_steps: usize,
    pub mean_steps: f64,
    pub mean_max_optimal_k: f64,
    pub mean_min_optimal_k: f64,
    pub phases: Vec<PhaseStats>,
}

const VERBS: [&str; 10] =
    ["search", "open", "filter", "book", "compare", "summarize", "caption", "translate", "classify", "rank"];

fn random_action(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(0..VERBS.len()), rng.gen_range(0..64))
}

fn render_action((verb, object): (usize, usize)) -> Action {
    Action::new(&format!("{} item-{object}", VERBS[verb])).expect("non-empty")
}

pub fn generate_tasks(cfg: &GeneratorConfig) -> Result<Vec<TaskTrace>, AgentError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tasks = Vec::with_capacity(cfg.n_tasks);
    for t in 0..cfg.n_tasks {
        let n_steps = rng.gen_range(cfg.min_steps..=cfg.max_steps);
        let phases = phase_sequence(&mut rng, cfg, n_steps);
        let task_prompt =
            format!("Task {t:04}: produce a plan of tool calls. Starting context [{}].", cfg.phases[phases[0]].tag);
        let mut steps = Vec::with_capacity(n_steps);
        for step in 1..=n_steps {
            let spec = &cfg.phases[phases[step - 1]];
            // the observation describes the context of the next decision
            let next_tag = &cfg.phases[phases[step.min(n_steps - 1)]].tag;
            let target = random_action(&mut rng);
            let matched = rng.gen_bool(spec.match_probability);
            let approx = if matched {
                target
            } else {
                // any different action will do
                let mut alt = random_action(&mut rng);
                while alt == target {
                    alt = random_action(&mut rng);
                }
                alt
            };
            let results = rng.gen_range(0..20);
            steps.push(StepScript {
                target_action: render_action(target),
                approx_action: render_action(approx),
                approx_latency_ms: cfg.approx_latency_ms.sample(&mut rng),
                target_latency_ms: cfg.target_latency_ms.sample(&mut rng),
                exec_latency_ms: cfg.exec_latency_ms.sample(&mut rng),
                approx_prompt_tokens: cfg.approx_prompt.at(step),
                approx_gen_tokens: cfg.approx_gen.sample(&mut rng),
                target_prompt_tokens: cfg.target_prompt.at(step),
                target_gen_tokens: cfg.target_gen.sample(&mut rng),
                observation: format!("[{next_tag}] {} returned {results} results", VERBS[target.0]),
                difficulty_tag: spec.tag.clone(),
            });
        }
        tasks.push(TaskTrace { task_id: format!("task-{t:04}"), task_prompt, steps });
    }
    Ok(tasks)
}

/// Phase index of every step: geometric phase lengths, each switch to a
/// uniformly chosen different phase.
fn phase_sequence(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, n_steps: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_steps);
    let mut phase = rng.gen_range(0..cfg.phases.len());
    let mut left = phase_length(rng, cfg.phases[phase].mean_length);
    while out.len() < n_steps {
        if left == 0 {
            phase = next_phase(rng, phase, cfg.phases.len());
            left = phase_length(rng, cfg.phases[phase].mean_length);
        }
        left -= 1;
        out.push(phase);
    }
    out
}

fn phase_length(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let stop = 1.0 / mean;
    let mut len = 1;
    while !rng.gen_bool(stop) {
        len += 1;
    }
    len
}

fn next_phase(rng: &mut ChaCha8Rng, current: usize, n: usize) -> usize {
    if n == 1 {
        return current;
    }
    let others: Vec<usize> = (0..n).filter(|&p| p != current).collect();
    *others.choose(rng).expect("n > 1")
}

pub fn workload_stats(cfg: &GeneratorConfig, tasks: &[TaskTrace]) -> GeneratorStats {
    let mut phases: Vec<PhaseStats> = cfg
        .phases
        .iter()
        .map(|p| PhaseStats { tag: p.tag.clone(), configured_probability: p.match_probability, steps: 0, matches: 0 })
        .collect();
    let mut total_steps = 0;
    let (mut sum_max, mut sum_min) = (0usize, 0usize);
    for task in tasks {
        total_steps += task.len();
        let runs = task.optimal_run_lengths();
        sum_max += runs.iter().copied().max().unwrap_or(0);
        sum_min += runs.iter().copied().min().unwrap_or(0);
        for s in &task.steps {
            if let Some(p) = phases.iter_mut().find(|p| p.tag == s.difficulty_tag) {
                p.steps += 1;
                p.matches += usize::from(s.matches());
            }
        }
    }
    let n = tasks.len().max(1) as f64;
    GeneratorStats {
        n_tasks: tasks.len(),
        total_steps,
        mean_steps: total_steps as f64 / n,
        mean_max_optimal_k: sum_max as f64 / n,
        mean_min_optimal_k: sum_min as f64 / n,
        phases,
    }
}
