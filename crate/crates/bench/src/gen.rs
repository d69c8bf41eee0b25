//! `gen`: write a workload to disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specplan_core::agents::{generate_tasks, workload_stats, GeneratorStats, TaskTrace};

use crate::{create_dir, write_json, BenchConfig, BenchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub seed: u64,
    /// Trace files in task order.
    pub tasks: Vec<String>,
    pub stats: GeneratorStats,
}

pub fn cmd_gen(cfg: &BenchConfig, out: &Path) -> Result<TraceManifest, BenchError> {
    let gen = &cfg.workload.generator;
    let tasks = generate_tasks(gen)?;
    create_dir(out)?;
    let mut files = Vec::with_capacity(tasks.len());
    for t in &tasks {
        let name = format!("{}.json", t.task_id);
        write_json(&out.join(&name), t)?;
        files.push(name);
    }
    let manifest = TraceManifest { seed: gen.seed, tasks: files, stats: workload_stats(gen, &tasks) };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Traces listed by a `gen` manifest, in manifest order.
pub fn load_traces(dir: &Path) -> Result<Vec<TaskTrace>, BenchError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
    let manifest: TraceManifest = serde_json::from_str(&text).map_err(|e| BenchError::json(&path, e))?;
    manifest
        .tasks
        .iter()
        .map(|f| {
            let p: PathBuf = dir.join(f);
            TaskTrace::load(&p).map_err(BenchError::from)
        })
        .collect()
}

/// The configured workload: trace files if given, else freshly generated.
pub fn load_workload(cfg: &BenchConfig) -> Result<Vec<TaskTrace>, BenchError> {
    match &cfg.workload.traces {
        Some(dir) => load_traces(dir),
        None => Ok(generate_tasks(&cfg.workload.generator)?),
    }
}
