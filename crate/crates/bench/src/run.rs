//! `run`: execute the policy matrix over a workload in simulation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use specplan_core::agents::{sequential_baseline, workload_stats, BaselineCosts, GeneratorStats, SimBackend, TaskTrace};
use specplan_core::engine::{run_task, RoundLog, TaskContext, TaskResult};
use specplan_core::ledger::CallRecord;
use specplan_core::predictor::save_checkpoint;
use specplan_core::PriceTable;

use crate::config::BuiltPolicy;
use crate::gen::load_workload;
use crate::{create_dir, write_file, write_json, write_jsonl, BenchConfig, BenchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub total_time_ms: u64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub task_id: String,
    #[serde(flatten)]
    pub costs: BaselineCosts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: crate::Mode,
    pub seed: u64,
    pub n_tasks: usize,
    pub policies: Vec<String>,
    pub prices: PriceTable,
    pub workload: Option<GeneratorStats>,
}

pub struct PolicyOutcome {
    pub name: String,
    pub results: Vec<TaskResult>,
    pub policy: BuiltPolicy,
}

impl PolicyOutcome {
    pub fn ledger(&self) -> Vec<CallRecord> {
        self.results.iter().flat_map(|r| r.ledger.iter().cloned()).collect()
    }

    pub fn rounds(&self) -> Vec<RoundLog> {
        self.results.iter().flat_map(|r| r.rounds.iter().cloned()).collect()
    }
}

/// Run one policy over every task in order, carrying round ids and the
/// policy's time base across tasks.
pub fn run_policy(cfg: &BenchConfig, index: usize, traces: &[TaskTrace]) -> Result<PolicyOutcome, BenchError> {
    let mut policy = cfg.build_policy(index)?;
    let mut results = Vec::with_capacity(traces.len());
    let (mut time_base, mut round_id) = (0u64, 0u64);
    for trace in traces {
        let mut backend = SimBackend::new(trace);
        let mut ctx = TaskContext::new(&trace.task_id);
        ctx.time_base_ms = time_base;
        ctx.first_round_id = round_id;
        let r = run_task(&mut backend, policy.as_policy(), &ctx)?;
        time_base += r.total_time_ms;
        round_id += r.rounds.len() as u64;
        results.push(r);
    }
    Ok(PolicyOutcome { name: cfg.policies[index].name.clone(), results, policy })
}

/// Exact-match accuracy of issued k per task, over resolved rounds.
pub fn task_accuracy(rounds: &[RoundLog]) -> Option<f64> {
    let resolved: Vec<&RoundLog> = rounds.iter().filter(|r| r.optimal_k.is_some() && r.k > 0).collect();
    if resolved.is_empty() {
        return None;
    }
    Some(resolved.iter().filter(|r| r.optimal_k == Some(r.k)).count() as f64 / resolved.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyWindow {
    pub window: usize,
    pub first_task: usize,
    pub last_task: usize,
    pub mean: f64,
    pub sd: f64,
    pub tasks: usize,
}

/// Mean and standard deviation of per-task accuracy over consecutive
/// windows of `size` tasks.
pub fn accuracy_windows(results: &[TaskResult], size: usize) -> Vec<AccuracyWindow> {
    results
        .chunks(size)
        .enumerate()
        .map(|(w, chunk)| {
            let acc: Vec<f64> = chunk.iter().filter_map(|r| task_accuracy(&r.rounds)).collect();
            let n = acc.len().max(1) as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            AccuracyWindow {
                window: w + 1,
                first_task: w * size + 1,
                last_task: w * size + chunk.len(),
                mean,
                sd: var.sqrt(),
                tasks: acc.len(),
            }
        })
        .collect()
}

fn write_accuracy(path: &Path, windows: &[AccuracyWindow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "first_task", "last_task", "mean", "sd", "tasks"])?;
    for a in windows {
        w.write_record([
            a.window.to_string(),
            a.first_task.to_string(),
            a.last_task.to_string(),
            format!("{:.4}", a.mean),
            format!("{:.4}", a.sd),
            a.tasks.to_string(),
        ])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn baseline_rows(traces: &[TaskTrace], prices: &PriceTable) -> Vec<BaselineRow> {
    traces.iter().map(|t| BaselineRow { task_id: t.task_id.clone(), costs: sequential_baseline(t, prices) }).collect()
}

/// Persist one policy's artifacts into the run directory.
pub fn write_policy(cfg: &BenchConfig, out: &Path, o: &mut PolicyOutcome) -> Result<(), BenchError> {
    let name = o.name.clone();
    write_jsonl(&out.join(format!("ledger-{name}.jsonl")), &o.ledger())?;
    write_jsonl(&out.join(format!("rounds-{name}.jsonl")), &o.rounds())?;
    let tasks: Vec<TaskSummary> = o
        .results
        .iter()
        .map(|r| TaskSummary { task_id: r.task_id.clone(), total_time_ms: r.total_time_ms, steps: r.actions.len() })
        .collect();
    write_jsonl(&out.join(format!("tasks-{name}.jsonl")), &tasks)?;
    match &mut o.policy {
        BuiltPolicy::Learned(p) => {
            write_accuracy(&out.join(format!("accuracy-{name}.csv")), &accuracy_windows(&o.results, cfg.accuracy_window))?;
            let dir = out.join("checkpoints");
            create_dir(&dir)?;
            let serving = p.model();
            save_checkpoint(&serving, &dir.join(format!("{name}.json")))?;
            if let Some(buf) = p.buffer() {
                let mut bytes = Vec::new();
                buf.dump(&mut bytes).map_err(|e| BenchError::io(&dir, e))?;
                write_file(&dir.join(format!("{name}-buffer.jsonl")), bytes)?;
            }
        }
        BuiltPolicy::Bandit(b) => {
            write_accuracy(&out.join(format!("accuracy-{name}.csv")), &accuracy_windows(&o.results, cfg.accuracy_window))?;
            write_json(&out.join(format!("bo-{name}.json")), &b.arms())?;
        }
        BuiltPolicy::Plain(_) => {}
    }
    Ok(())
}

pub fn cmd_run(cfg: &BenchConfig, out: &Path) -> Result<RunManifest, BenchError> {
    let traces = load_workload(cfg)?;
    create_dir(out)?;
    write_jsonl(&out.join("baseline.jsonl"), &baseline_rows(&traces, &cfg.prices))?;
    for index in 0..cfg.policies.len() {
        let mut o = run_policy(cfg, index, &traces)?;
        write_policy(cfg, out, &mut o)?;
    }
    let manifest = RunManifest {
        mode: cfg.mode,
        seed: cfg.seed,
        n_tasks: traces.len(),
        policies: cfg.policies.iter().map(|p| p.name.clone()).collect(),
        prices: cfg.prices,
        workload: cfg.workload.traces.is_none().then(|| workload_stats(&cfg.workload.generator, &traces)),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
