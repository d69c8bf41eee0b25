//! Benchmark configuration: a TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use specplan_core::agents::GeneratorConfig;
use specplan_core::baselines::{sft_policy, BoPolicy, FixedK, Sequential};
use specplan_core::engine::KPolicy;
use specplan_core::predictor::{DynamicPolicy, Hyperparams};
use specplan_core::PriceTable;

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sim,
    Live,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Workload {
    pub generator: GeneratorConfig,
    /// Directory of trace files written by `gen`; overrides the generator.
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Sequential,
    Fixed,
    Dynamic,
    Sft,
    Bo,
}

/// One entry of the policy matrix. Predictor fields left unset fall back to
/// the `[predictor]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: String,
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_k: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_k_max() -> usize {
    6
}

impl PolicySpec {
    fn base(name: &str, kind: PolicyKind) -> Self {
        Self {
            name: name.into(),
            kind,
            k: None,
            tau: None,
            beta: None,
            lambda: None,
            gamma: None,
            warmup_k: None,
            epsilon: default_epsilon(),
            k_max: default_k_max(),
        }
    }

    pub fn sequential() -> Self {
        Self::base("sequential", PolicyKind::Sequential)
    }

    pub fn fixed(k: usize) -> Self {
        Self { k: Some(k), ..Self::base(&format!("fixed-k{k}"), PolicyKind::Fixed) }
    }

    pub fn dynamic(name: &str, tau: f64, beta: i64) -> Self {
        Self { tau: Some(tau), beta: Some(beta), ..Self::base(name, PolicyKind::Dynamic) }
    }

    pub fn sft() -> Self {
        Self::base("sft", PolicyKind::Sft)
    }

    pub fn bo() -> Self {
        Self::base("bo", PolicyKind::Bo)
    }

    pub fn hyper(&self, defaults: &Hyperparams) -> Hyperparams {
        let mut h = defaults.clone();
        if let Some(t) = self.tau {
            h.tau = t;
        }
        if let Some(b) = self.beta {
            h.beta = b;
        }
        if let Some(l) = self.lambda {
            h.lambda = l;
        }
        if let Some(g) = self.gamma {
            h.gamma = g;
        }
        if let Some(w) = self.warmup_k {
            h.warmup_k = w;
        }
        h
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.kind, PolicyKind::Dynamic | PolicyKind::Sft)
    }
}

/// A constructed policy; learned ones stay accessible for checkpoint dumps.
pub enum BuiltPolicy {
    Plain(Box<dyn KPolicy>),
    Learned(DynamicPolicy),
    Bandit(BoPolicy),
}

impl BuiltPolicy {
    pub fn as_policy(&mut self) -> &mut dyn KPolicy {
        match self {
            BuiltPolicy::Plain(p) => p.as_mut(),
            BuiltPolicy::Learned(p) => p,
            BuiltPolicy::Bandit(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveSettings {
    pub base_url: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub approx_model: String,
    pub target_model: String,
    pub approx_template: PathBuf,
    pub target_template: PathBuf,
    /// JSON list of live tasks.
    pub tasks: PathBuf,
    pub stop_action: String,
    pub max_tokens: u32,
    /// Delay of the built-in acknowledging tool executor.
    pub exec_latency_ms: u64,
}

impl Default for LiveSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            approx_model: "gpt-4.1-mini".into(),
            target_model: "gpt-4.1-mini".into(),
            approx_template: PathBuf::from("templates/direct.txt"),
            target_template: PathBuf::from("templates/react.txt"),
            tasks: PathBuf::from("tasks.json"),
            stop_action: "FINISH".into(),
            max_tokens: 256,
            exec_latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Seeds policy exploration and trainer sampling.
    pub seed: u64,
    pub mode: Mode,
    pub workload: Workload,
    pub prices: PriceTable,
    pub predictor: Hyperparams,
    /// Virtual time a training pass takes before its checkpoint is visible.
    pub train_latency_ms: u64,
    /// Virtual time the predictor takes to issue k.
    pub predictor_latency_ms: u64,
    /// Tasks per accuracy window.
    pub accuracy_window: usize,
    pub policies: Vec<PolicySpec>,
    pub live: Option<LiveSettings>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            mode: Mode::Sim,
            workload: Workload::default(),
            prices: PriceTable::default(),
            predictor: Hyperparams::default(),
            train_latency_ms: 0,
            predictor_latency_ms: 0,
            accuracy_window: 50,
            policies: default_policies(),
            live: None,
        }
    }
}

pub fn default_policies() -> Vec<PolicySpec> {
    let mut v = vec![PolicySpec::sequential(), PolicySpec::fixed(2), PolicySpec::fixed(4), PolicySpec::fixed(6)];
    for tau in [0.5, 0.8, 0.9, 0.95, 0.99] {
        v.push(PolicySpec::dynamic(&format!("dsp-tau{tau}"), tau, 0));
    }
    v.push(PolicySpec::dynamic("dsp-offset1", 0.5, 1));
    v.push(PolicySpec::dynamic("dsp-offset2", 0.5, 2));
    v.push(PolicySpec::sft());
    v.push(PolicySpec::bo());
    v
}

impl BenchConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, BenchError> {
        let mut value = toml::Table::try_from(BenchConfig::default())
            .map_err(|e| BenchError::Config(format!("defaults: {e}")))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| BenchError::io(p, e))?;
            let file =
                text.parse::<toml::Table>().map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?;
            merge(&mut value, file);
        }
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let cfg: BenchConfig =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.policies.is_empty() {
            return Err(BenchError::Config("at least one policy is required".into()));
        }
        let mut names = std::collections::HashSet::new();
        for p in &self.policies {
            if !names.insert(&p.name) {
                return Err(BenchError::Config(format!("duplicate policy name {}", p.name)));
            }
            if p.name.is_empty() || p.name.contains(['/', '\\']) {
                return Err(BenchError::Config(format!("invalid policy name {:?}", p.name)));
            }
        }
        if self.accuracy_window == 0 {
            return Err(BenchError::Config("accuracy_window must be positive".into()));
        }
        if self.mode == Mode::Live && self.live.is_none() {
            return Err(BenchError::Config("live mode requires a [live] table".into()));
        }
        self.prices.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.workload.generator.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn policy(&self, name: &str) -> Option<&PolicySpec> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// Seed for the policy at `index` in the matrix.
    pub fn policy_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
    }

    /// Policy for simulation: learned policies train inside virtual time.
    pub fn build_policy(&self, index: usize) -> Result<BuiltPolicy, BenchError> {
        self.build(index, false)
    }

    /// Policy for live runs: learned policies train on a background thread.
    pub fn build_live_policy(&self, index: usize) -> Result<BuiltPolicy, BenchError> {
        self.build(index, true)
    }

    fn build(&self, index: usize, background: bool) -> Result<BuiltPolicy, BenchError> {
        let spec = &self.policies[index];
        let seed = self.policy_seed(index);
        let cfg_err = |e: String| BenchError::Config(format!("policy {}: {e}", spec.name));
        Ok(match spec.kind {
            PolicyKind::Sequential => BuiltPolicy::Plain(Box::new(Sequential)),
            PolicyKind::Fixed => {
                let k = spec.k.ok_or_else(|| cfg_err("fixed policy needs k".into()))?;
                BuiltPolicy::Plain(Box::new(FixedK::new(k).map_err(|e| cfg_err(e.to_string()))?))
            }
            PolicyKind::Dynamic | PolicyKind::Sft => {
                let hyper = spec.hyper(&self.predictor);
                let p = match (spec.kind, background) {
                    (PolicyKind::Sft, false) => sft_policy(spec.name.clone(), hyper, seed),
                    (_, false) => DynamicPolicy::new(spec.name.clone(), hyper, seed),
                    (kind, true) => {
                        let hyper = if kind == PolicyKind::Sft { Hyperparams { lambda: 1.0, gamma: 1.0, ..hyper } } else { hyper };
                        DynamicPolicy::with_background_trainer(spec.name.clone(), hyper, seed, Duration::ZERO)
                    }
                }
                .map_err(|e| cfg_err(e.to_string()))?;
                BuiltPolicy::Learned(
                    p.with_train_latency(self.train_latency_ms).with_predictor_latency(self.predictor_latency_ms),
                )
            }
            PolicyKind::Bo => BuiltPolicy::Bandit(
                BoPolicy::new(spec.name.clone(), spec.k_max, spec.epsilon, seed).map_err(|e| cfg_err(e.to_string()))?,
            ),
        })
    }
}

/// Deep-merge tables; anything else in `over` replaces the base value.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Set a dotted key (array elements by index) to a TOML value; bare words
/// that do not parse as TOML are taken as strings.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), BenchError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| BenchError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(BenchError::Config(format!("bad override key {key:?}")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if last {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let next = parts[i + 1];
        if let Ok(idx) = next.parse::<usize>() {
            let arr = cur
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Array(Vec::new()))
                .as_array_mut()
                .ok_or_else(|| BenchError::Config(format!("{part} is not an array")))?;
            let elem = arr.get_mut(idx).ok_or_else(|| BenchError::Config(format!("{part}.{idx} out of range")))?;
            if i + 2 == parts.len() {
                *elem = value;
                return Ok(());
            }
            return apply_override(
                elem.as_table_mut().ok_or_else(|| BenchError::Config(format!("{part}.{idx} is not a table")))?,
                &format!("{}={raw}", parts[i + 2..].join(".")),
            );
        }
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| BenchError::Config(format!("{part} is not a table")))?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
