use std::sync::Arc;
use std::time::Duration;

use specplan_bench::live::build_agents;
use specplan_bench::config::LiveSettings;
use specplan_core::engine::{Feedback, KChoice, KPolicy, PolicyError};
use specplan_core::predictor::{DynamicPolicy, Hyperparams};
use specplan_core::{Action, Millis, PlanState};
use specplan_live::mock::{MockConfig, MockServer};
use specplan_live::{run_live_task, ChatClient, EchoExecutor, LiveOptions, LiveTask};

use crate::{ensure, Check};

/// Consults and trains the learned policy every round but always issues
/// the same k, so round structure does not depend on training progress.
struct PinnedK {
    inner: DynamicPolicy,
    k: usize,
}

impl KPolicy for PinnedK {
    fn name(&self) -> &str {
        "pinned"
    }

    fn choose_k(&mut self, state: &PlanState, now_ms: Millis) -> Result<KChoice, PolicyError> {
        self.inner.choose_k(state, now_ms)?;
        Ok(KChoice::immediate(self.k))
    }

    fn observe(&mut self, feedback: Feedback<'_>, now_ms: Millis) {
        self.inner.observe(feedback, now_ms);
    }
}

struct Pass {
    round_ms: Vec<f64>,
    swaps_during_run: u64,
}

async fn pass(server: &MockServer, train_delay: Duration) -> Result<Pass, String> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let live = LiveSettings {
        approx_model: "draft".into(),
        target_model: "big".into(),
        approx_template: root.join("templates/direct.txt"),
        target_template: root.join("templates/react.txt"),
        ..LiveSettings::default()
    };
    let mut agents = build_agents(&live, ChatClient::new(&server.base_url, "k", 64)).map_err(|e| e.to_string())?;
    agents.executor = Arc::new(EchoExecutor { latency: Duration::from_millis(5) });
    let hyper = Hyperparams { batch: 1, dimension: 1024, ..Hyperparams::default() };
    let inner = DynamicPolicy::with_background_trainer("stub", hyper, 1, train_delay).map_err(|e| e.to_string())?;
    let mut policy = PinnedK { inner, k: 3 };
    let mut round_ms = Vec::new();
    for i in 0..4 {
        let task = LiveTask { task_id: format!("t{i}"), prompt: format!("errand {i}"), max_steps: 15 };
        let opts = LiveOptions { stop_action: Some(Action::new("FINISH").unwrap()), ..LiveOptions::default() };
        let r = run_live_task(&agents, &mut policy, &task, &opts).await.map_err(|e| e.to_string())?;
        round_ms.extend(r.rounds.iter().map(|r| (r.end_ms - r.start_ms) as f64));
    }
    let swaps_during_run = policy.inner.slot().version();
    policy.inner.stop_trainer();
    Ok(Pass { round_ms, swaps_during_run })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Mean live round latency with an instant trainer against one that sleeps
/// 300 ms after every pass. Passes alternate so drift affects both sides.
pub fn round_latency() -> Check {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let mut plan: Vec<String> = (1..10).map(|i| format!("tool{i} input {i}")).collect();
        plan.push("FINISH".into());
        let cfg = MockConfig {
            plan,
            mismatch_steps: vec![3, 7],
            approx_chunk_delay: Duration::from_millis(4),
            target_chunk_delay: Duration::from_millis(8),
            target_thought_tokens: 10,
            ..MockConfig::default()
        };
        let server = MockServer::start(cfg).await.map_err(|e| e.to_string())?;
        let (mut fast, mut slow) = (Vec::new(), Vec::new());
        let mut slow_swaps = Vec::new();
        for _ in 0..2 {
            fast.extend(pass(&server, Duration::ZERO).await?.round_ms);
            let p = pass(&server, Duration::from_millis(300)).await?;
            slow.extend(p.round_ms);
            slow_swaps.push(p.swaps_during_run);
        }
        ensure!(fast.len() == slow.len(), "round counts differ: {} vs {}", fast.len(), slow.len());
        let (a, b) = (mean(&fast), mean(&slow));
        let change = (b - a).abs() / a;
        ensure!(change <= 0.05, "mean round {a:.1} ms vs {b:.1} ms with slow trainer: {:.1}% change", change * 100.0);
        Ok(format!(
            "mean round {a:.1} ms vs {b:.1} ms with 300 ms training delay ({:.2}% change, {} rounds each, checkpoints swapped mid-run {slow_swaps:?})",
            change * 100.0,
            fast.len()
        ))
    })
}
