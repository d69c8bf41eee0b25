//! `live`: run policies against an OpenAI-compatible endpoint.
//!
//! The reference pass runs the target alone step by step; the draft model
//! is then asked once per committed state of that pass so the baseline
//! carries both roles' sequential token totals, as in simulation.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use specplan_core::agents::{BaselineCosts, TokenTally};
use specplan_core::baselines::Sequential;
use specplan_core::engine::TaskResult;
use specplan_core::{Action, CallStatus, Role};
use specplan_live::{
    load_tasks, run_live_task, ChatClient, EchoExecutor, LiveAgents, LiveError, LiveOptions, LiveTask, Progress,
    PromptTemplate, RoleConfig,
};

use crate::config::{BuiltPolicy, LiveSettings};
use crate::run::{write_policy, BaselineRow, PolicyOutcome, RunManifest};
use crate::{create_dir, write_json, write_jsonl, BenchConfig, BenchError, Mode};

/// Resolve credentials, templates and tasks, then run the matrix. The key
/// is checked before any request is sent.
pub fn cmd_live(cfg: &BenchConfig, out: &Path) -> Result<RunManifest, BenchError> {
    let live = cfg.live.as_ref().ok_or_else(|| BenchError::Config("live mode requires a [live] table".into()))?;
    let client = ChatClient::from_env(&live.base_url, &live.api_key_env, live.max_tokens)?;
    let agents = build_agents(live, client)?;
    let tasks = load_tasks(&live.tasks)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| BenchError::io(out, e))?;
    rt.block_on(run_live_matrix(cfg, &agents, &tasks, out))
}

pub fn build_agents(live: &LiveSettings, client: ChatClient) -> Result<LiveAgents, BenchError> {
    Ok(LiveAgents {
        client: Arc::new(client),
        approx: RoleConfig { model: live.approx_model.clone(), template: PromptTemplate::load(&live.approx_template)? },
        target: RoleConfig { model: live.target_model.clone(), template: PromptTemplate::load(&live.target_template)? },
        executor: Arc::new(EchoExecutor { latency: Duration::from_millis(live.exec_latency_ms) }),
    })
}

fn stop_action(cfg: &BenchConfig) -> Result<Option<Action>, BenchError> {
    match cfg.live.as_ref().map(|l| l.stop_action.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => Action::new(s).map(Some).map_err(|e| BenchError::Config(format!("stop_action: {e}"))),
    }
}

/// Token usage of a single direct call.
fn tally_call(t: &mut TokenTally, role: Role, progress: &Progress) {
    match progress.usage {
        Some(u) => t.add(role, u.prompt_tokens, u.completion_tokens),
        None => t.add(role, 0, progress.chunks),
    }
}

async fn baseline_task(agents: &LiveAgents, task: &LiveTask, opts: &LiveOptions, cfg: &BenchConfig) -> Result<BaselineRow, BenchError> {
    let r = run_live_task(agents, &mut Sequential, task, opts).await?;
    let mut tokens = TokenTally::default();
    for rec in r.ledger.iter().filter(|c| c.status == CallStatus::Completed) {
        tokens.add(rec.role, rec.prompt_tokens, rec.gen_tokens);
    }
    for (i, state) in r.states.iter().enumerate() {
        let prompt = agents.approx.template.render(state);
        let progress = Mutex::new(Progress::default());
        agents
            .client
            .stream(&agents.approx.model, &prompt, &progress)
            .await
            .map_err(|e| LiveError::Step { step: i + 1, role: Role::Approx, source: Box::new(e), partial_ledger: Vec::new() })?;
        tally_call(&mut tokens, Role::Approx, &progress.into_inner().unwrap_or_else(|e| e.into_inner()));
    }
    Ok(BaselineRow {
        task_id: task.task_id.clone(),
        costs: BaselineCosts {
            time_ms: r.total_time_ms,
            tokens,
            prompt_cost: tokens.prompt_cost(&cfg.prices),
            gen_cost: tokens.gen_cost(&cfg.prices),
        },
    })
}

/// Run every configured policy over `tasks` with `agents`, one task at a
/// time, and write the same run directory layout as simulation.
pub async fn run_live_matrix(
    cfg: &BenchConfig,
    agents: &LiveAgents,
    tasks: &[LiveTask],
    out: &Path,
) -> Result<RunManifest, BenchError> {
    if tasks.is_empty() {
        return Err(BenchError::Config("live task list is empty".into()));
    }
    let stop = stop_action(cfg)?;
    create_dir(out)?;

    let mut baseline = Vec::with_capacity(tasks.len());
    for task in tasks {
        let opts = LiveOptions { stop_action: stop.clone(), ..LiveOptions::default() };
        baseline.push(baseline_task(agents, task, &opts, cfg).await?);
    }
    write_jsonl(&out.join("baseline.jsonl"), &baseline)?;

    for index in 0..cfg.policies.len() {
        let mut policy = cfg.build_live_policy(index)?;
        let mut results: Vec<TaskResult> = Vec::with_capacity(tasks.len());
        let (mut time_base, mut round_id) = (0u64, 0u64);
        for task in tasks {
            let opts = LiveOptions {
                first_round_id: round_id,
                time_base_ms: time_base,
                stop_action: stop.clone(),
                ..LiveOptions::default()
            };
            let r = run_live_task(agents, policy.as_policy(), task, &opts).await?;
            time_base += r.total_time_ms;
            round_id += r.rounds.len() as u64;
            results.push(r);
        }
        if let BuiltPolicy::Learned(p) = &mut policy {
            p.stop_trainer();
        }
        let mut o = PolicyOutcome { name: cfg.policies[index].name.clone(), results, policy };
        write_policy(cfg, out, &mut o)?;
    }

    let manifest = RunManifest {
        mode: Mode::Live,
        seed: cfg.seed,
        n_tasks: tasks.len(),
        policies: cfg.policies.iter().map(|p| p.name.clone()).collect(),
        prices: cfg.prices,
        workload: None,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
