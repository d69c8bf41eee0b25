use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use specplan_bench::gen::{cmd_gen, load_traces};
use specplan_bench::report::{cmd_report, FullReport, PolicyReport};
use specplan_bench::run::cmd_run;
use specplan_bench::BenchConfig;
use specplan_core::agents::{GeneratorStats, TaskTrace};
use specplan_core::ledger::{read_jsonl, CallRecord};
use specplan_core::Role;

use crate::{ensure, Check};

const TAUS: [&str; 5] = ["dsp-tau0.5", "dsp-tau0.8", "dsp-tau0.9", "dsp-tau0.95", "dsp-tau0.99"];

/// The default matrix on the default workload, run twice from the same
/// trace files into separate directories.
pub struct MatrixRuns {
    _dir: tempfile::TempDir,
    traces: Vec<TaskTrace>,
    stats: GeneratorStats,
    runs: [PathBuf; 2],
    report: FullReport,
}

impl MatrixRuns {
    pub fn build() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = BenchConfig::load(None, &[]).map_err(|e| e.to_string())?;
        let trace_dir = dir.path().join("traces");
        let manifest = cmd_gen(&cfg, &trace_dir).map_err(|e| e.to_string())?;
        let traces = load_traces(&trace_dir).map_err(|e| e.to_string())?;
        let mut cfg = cfg;
        cfg.workload.traces = Some(trace_dir);
        let runs = [dir.path().join("run-a"), dir.path().join("run-b")];
        let reports: Vec<Result<FullReport, String>> = std::thread::scope(|s| {
            let handles: Vec<_> = runs
                .iter()
                .map(|out| {
                    let cfg = &cfg;
                    s.spawn(move || {
                        cmd_run(cfg, out).map_err(|e| e.to_string())?;
                        cmd_report(out, "fixed-k2", &out.join("report.csv")).map_err(|e| e.to_string())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("run panicked".into()))).collect()
        });
        let mut reports = reports.into_iter();
        let report = reports.next().expect("two runs")?;
        reports.next().expect("two runs")?;
        Ok(Self { _dir: dir, traces, stats: manifest.stats, runs, report })
    }

    fn policy(&self, name: &str) -> Result<&PolicyReport, String> {
        self.report.policies.iter().find(|p| p.report.policy == name).ok_or_else(|| format!("no policy {name}"))
    }
}

pub fn tau_trend(m: &MatrixRuns) -> Check {
    let (hi, lo) = (m.stats.mean_max_optimal_k, m.stats.mean_min_optimal_k);
    ensure!(m.traces.len() == 312, "{} tasks", m.traces.len());
    ensure!((hi - 3.5).abs() <= 0.5 && (lo - 1.6).abs() <= 0.5, "workload max/min optimal k {hi:.2}/{lo:.2}");
    let ks: Vec<f64> = TAUS.iter().map(|t| m.policy(t).map(|p| p.report.mean_k)).collect::<Result<_, _>>()?;
    let shown: Vec<String> = ks.iter().map(|k| format!("{k:.2}")).collect();
    ensure!(ks.windows(2).all(|w| w[0] < w[1]), "K over tau {shown:?} is not strictly increasing");
    Ok(format!("workload max/min k {hi:.2}/{lo:.2}; K over tau .5..99 = {}", shown.join(" < ")))
}

pub fn pareto(m: &MatrixRuns) -> Check {
    let low = &m.policy("dsp-tau0.5")?.report;
    ensure!(
        low.ratios.cost < 1.0 && low.ratios.time <= 1.05,
        "tau .5: Cost x {:.3}, T x {:.3}",
        low.ratios.cost,
        low.ratios.time
    );
    let k6 = &m.policy("fixed-k6")?.report;
    let mut notes = Vec::new();
    let mut any = false;
    for name in ["dsp-tau0.99", "dsp-offset2"] {
        let d = &m.policy(name)?.report;
        let saving = d.delta_time / k6.delta_time;
        let cost = d.ratios.cost / k6.ratios.cost;
        any |= saving >= 0.90 && cost <= 0.75;
        notes.push(format!("{name} {:.0}% of saving at {:.0}% of cost", saving * 100.0, cost * 100.0));
    }
    ensure!(any, "tau .5 ok, but {}", notes.join(", "));
    Ok(format!(
        "tau .5 Cost x {:.3} T x {:.3}; fixed-k6 saves {:.1}% at Cost x {:.3}; {}",
        low.ratios.cost,
        low.ratios.time,
        k6.delta_time,
        k6.ratios.cost,
        notes.join("; ")
    ))
}

#[derive(Debug, Deserialize)]
struct BreakdownRow {
    policy: String,
    plan_type: String,
    approx_prompt: i64,
    approx_gen: i64,
    target_prompt: i64,
    target_gen: i64,
    total_prompt: i64,
    total_gen: i64,
    total: i64,
}

impl BreakdownRow {
    fn parts(&self) -> [i64; 4] {
        [self.approx_prompt, self.approx_gen, self.target_prompt, self.target_gen]
    }
}

/// Redundant tokens by component, recounted as ledger totals minus every
/// step's scripted approx and target tokens. Valid for policies that
/// speculate in every round, where each step's pair of calls is useful.
fn recount(run: &Path, policy: &str, traces: &[TaskTrace]) -> Result<[i64; 4], String> {
    let path = run.join(format!("ledger-{policy}.jsonl"));
    let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let ledger: Vec<CallRecord> = read_jsonl(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
    let mut parts = [0i64; 4];
    for r in &ledger {
        let i = if r.role == Role::Approx { 0 } else { 2 };
        parts[i] += r.prompt_tokens as i64;
        parts[i + 1] += r.gen_tokens as i64;
    }
    for s in traces.iter().flat_map(|t| &t.steps) {
        parts[0] -= s.approx_prompt_tokens as i64;
        parts[1] -= s.approx_gen_tokens as i64;
        parts[2] -= s.target_prompt_tokens as i64;
        parts[3] -= s.target_gen_tokens as i64;
    }
    Ok(parts)
}

pub fn breakdown(m: &MatrixRuns) -> Check {
    let path = m.runs[0].join("breakdown.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
    let rows: Vec<BreakdownRow> = reader.deserialize().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut by: BTreeMap<(&str, &str), &BreakdownRow> = BTreeMap::new();
    for r in &rows {
        ensure!(r.total == r.total_prompt + r.total_gen, "{} {}: total is not prompt + gen", r.policy, r.plan_type);
        by.insert((r.policy.as_str(), r.plan_type.as_str()), r);
    }
    let mut checked = 0;
    for p in &m.report.policies {
        let name = p.report.policy.as_str();
        let red = by.get(&(name, "redundant")).ok_or_else(|| format!("{name}: no redundant row"))?;
        let parts = red.parts();
        ensure!(parts.iter().sum::<i64>() == red.total, "{name}: components {parts:?} do not sum to {}", red.total);
        ensure!(red.total_prompt == parts[0] + parts[2] && red.total_gen == parts[1] + parts[3], "{name}: prompt/gen split");
        if name == "sequential" {
            continue;
        }
        let actual = by[&(name, "actual")].parts();
        let normal = by[&(name, "normal")].parts();
        let sum: Vec<i64> = normal.iter().zip(parts).map(|(n, r)| n + r).collect();
        ensure!(actual.to_vec() == sum, "{name}: actual {actual:?} != normal + redundant {sum:?}");
        let want = recount(&m.runs[0], name, &m.traces)?;
        ensure!(parts == want, "{name}: redundant {parts:?}, ledger recount {want:?}");
        checked += 1;
    }
    let totals: Vec<i64> = ["fixed-k2", "fixed-k4", "fixed-k6"]
        .iter()
        .map(|n| by.get(&(*n, "redundant")).map(|r| r.total).ok_or_else(|| format!("no {n}")))
        .collect::<Result<_, _>>()?;
    ensure!(totals[0] < totals[1] && totals[1] < totals[2], "redundant over k 2/4/6 {totals:?}");
    Ok(format!(
        "components sum exactly for {} policies, {checked} match an independent ledger recount; redundant k2/k4/k6 = {:?}",
        m.report.policies.len(),
        totals
    ))
}

pub fn bandit(m: &MatrixRuns) -> Check {
    let bo = &m.policy("bo")?.report;
    let (bc, bt) = (bo.ratios.cost, bo.ratios.time);
    let mut dominators = Vec::new();
    for p in m.report.policies.iter().filter(|p| p.report.policy.starts_with("dsp-")) {
        let (dc, dt) = (p.report.ratios.cost, p.report.ratios.time);
        if (bc > dc && bt >= dt) || (bt > dt && bc >= dc) {
            dominators.push(format!("{} (Cost x {dc:.3}, T x {dt:.3})", p.report.policy));
        }
    }
    ensure!(!dominators.is_empty(), "bo Cost x {bc:.3}, T x {bt:.3} is not dominated by any DSP setting");
    Ok(format!("bo Cost x {bc:.3}, T x {bt:.3}; dominated by {}", dominators.join(", ")))
}

fn files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            files(&p, base, out)?;
        } else {
            out.push(p.strip_prefix(base).expect("under base").to_path_buf());
        }
    }
    Ok(())
}

pub fn determinism(m: &MatrixRuns) -> Check {
    let mut names = Vec::new();
    files(&m.runs[0], &m.runs[0], &mut names).map_err(|e| e.to_string())?;
    names.sort();
    let mut other = Vec::new();
    files(&m.runs[1], &m.runs[1], &mut other).map_err(|e| e.to_string())?;
    other.sort();
    ensure!(names == other, "file sets differ");
    for required in ["report.csv", "breakdown.csv", "scatter.csv", "ledger-dsp-tau0.9.jsonl", "rounds-bo.jsonl"] {
        ensure!(names.iter().any(|n| n == Path::new(required)), "missing {required}");
    }
    let mut bytes = 0;
    for n in &names {
        let a = std::fs::read(m.runs[0].join(n)).map_err(|e| e.to_string())?;
        let b = std::fs::read(m.runs[1].join(n)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{} differs between runs", n.display());
        bytes += a.len();
    }
    Ok(format!("{} files ({bytes} bytes) byte-identical across two seeded runs", names.len()))
}
