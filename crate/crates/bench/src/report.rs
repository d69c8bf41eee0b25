//! `report`: metrics tables over a run directory.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use specplan_core::engine::RoundLog;
use specplan_core::ledger::CallRecord;
use specplan_core::metrics::{build_report, ratios, Breakdown, Ratios, RunReport, RunTotals, TaskRecord, TokenRow};

use crate::run::{BaselineRow, RunManifest, TaskSummary};
use crate::{read_jsonl, write_json, BenchError};

/// Rebuild per-task records of one policy from its run-directory files.
pub fn load_policy_tasks(run: &Path, policy: &str) -> Result<Vec<TaskRecord>, BenchError> {
    let baseline: Vec<BaselineRow> = read_jsonl(&run.join("baseline.jsonl"))?;
    let tasks: Vec<TaskSummary> = read_jsonl(&run.join(format!("tasks-{policy}.jsonl")))?;
    let rounds: Vec<RoundLog> = read_jsonl(&run.join(format!("rounds-{policy}.jsonl")))?;
    let ledger: Vec<CallRecord> = read_jsonl(&run.join(format!("ledger-{policy}.jsonl")))?;

    let base: HashMap<&str, &BaselineRow> = baseline.iter().map(|b| (b.task_id.as_str(), b)).collect();
    let task_of: HashMap<u64, &str> = rounds.iter().map(|r| (r.round_id, r.task_id.as_str())).collect();
    let mut by_task: HashMap<&str, (Vec<CallRecord>, Vec<RoundLog>)> = HashMap::new();
    for r in &rounds {
        by_task.entry(r.task_id.as_str()).or_default().1.push(r.clone());
    }
    for rec in ledger {
        let task = task_of.get(&rec.round_id).ok_or_else(|| BenchError::MissingRun(run.to_path_buf()))?;
        by_task.entry(task).or_default().0.push(rec);
    }
    tasks
        .iter()
        .map(|t| {
            let b = base.get(t.task_id.as_str()).ok_or_else(|| BenchError::MissingRun(run.to_path_buf()))?;
            let (ledger, rounds) = by_task.remove(t.task_id.as_str()).unwrap_or_default();
            Ok(TaskRecord {
                task_id: t.task_id.clone(),
                total_time_ms: t.total_time_ms,
                ledger,
                rounds,
                baseline: b.costs,
            })
        })
        .collect()
}

pub fn load_manifest(run: &Path) -> Result<RunManifest, BenchError> {
    let path = run.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|_| BenchError::MissingRun(run.to_path_buf()))?;
    serde_json::from_str(&text).map_err(|e| BenchError::json(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    #[serde(flatten)]
    pub report: RunReport,
    pub ratios_vs_sequential: Option<Ratios>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullReport {
    pub reference: String,
    pub policies: Vec<PolicyReport>,
}

pub fn compute_report(run: &Path, reference: &str) -> Result<FullReport, BenchError> {
    let manifest = load_manifest(run)?;
    if !manifest.policies.iter().any(|p| p == reference) {
        return Err(BenchError::UnknownPolicy(reference.to_string()));
    }
    let mut tasks = Vec::new();
    for p in &manifest.policies {
        tasks.push((p.clone(), load_policy_tasks(run, p)?));
    }
    let totals = |name: &str| {
        tasks.iter().find(|(p, _)| p == name).map(|(_, t)| RunTotals::of(t, &manifest.prices))
    };
    let ref_totals = totals(reference).expect("checked above");
    let seq_totals = totals("sequential");
    let mut policies = Vec::new();
    for (name, t) in &tasks {
        let report = build_report(name, t, &ref_totals, &manifest.prices)?;
        let ratios_vs_sequential = seq_totals.as_ref().map(|s| ratios(&report.totals, s));
        policies.push(PolicyReport { report, ratios_vs_sequential });
    }
    Ok(FullReport { reference: reference.to_string(), policies })
}

pub const TABLE_HEADER: [&str; 11] =
    ["policy", "delta_t", "delta_p", "delta_g", "delta_cost", "t_x", "p_x", "g_x", "cost_x", "mc_bar", "k_bar"];

fn table_row(r: &RunReport) -> Vec<String> {
    let f = |x: f64| format!("{x:.2}");
    vec![
        r.policy.clone(),
        f(r.delta_time),
        f(r.delta_prompt),
        f(r.delta_gen),
        f(r.delta_cost),
        f(r.ratios.time),
        f(r.ratios.prompt),
        f(r.ratios.gen),
        f(r.ratios.cost),
        f(r.mean_concurrency),
        f(r.mean_k),
    ]
}

fn breakdown_rows(policy: &str, b: &Breakdown) -> Vec<Vec<String>> {
    let row = |kind: &str, t: &TokenRow| {
        vec![
            policy.to_string(),
            kind.to_string(),
            t.approx_prompt.to_string(),
            t.approx_gen.to_string(),
            t.target_prompt.to_string(),
            t.target_gen.to_string(),
            t.total_prompt.to_string(),
            t.total_gen.to_string(),
            t.total.to_string(),
        ]
    };
    vec![
        row("actual", &b.actual),
        row("normal", &b.normal),
        row("delta", &b.delta),
        row("redundant", &b.redundant),
    ]
}

/// Write the table CSV to `out`, and `report.json`, `breakdown.csv` and
/// `scatter.csv` beside it.
pub fn cmd_report(run: &Path, reference: &str, out: &Path) -> Result<FullReport, BenchError> {
    let full = compute_report(run, reference)?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    crate::create_dir(dir)?;

    let mut w = csv::Writer::from_path(out)?;
    w.write_record(TABLE_HEADER)?;
    for p in &full.policies {
        w.write_record(table_row(&p.report))?;
    }
    w.flush().map_err(|e| BenchError::io(out, e))?;

    let path = dir.join("breakdown.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "policy",
        "plan_type",
        "approx_prompt",
        "approx_gen",
        "target_prompt",
        "target_gen",
        "total_prompt",
        "total_gen",
        "total",
    ])?;
    for p in &full.policies {
        for r in breakdown_rows(&p.report.policy, &p.report.breakdown) {
            w.write_record(r)?;
        }
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;

    let path = dir.join("scatter.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["policy", "delta_t", "delta_p", "delta_g"])?;
    for p in &full.policies {
        let r = &p.report;
        w.write_record([r.policy.clone(), format!("{:.4}", r.delta_time), format!("{:.4}", r.delta_prompt), format!("{:.4}", r.delta_gen)])?;
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;

    write_json(&dir.join("report.json"), &full)?;
    Ok(full)
}
