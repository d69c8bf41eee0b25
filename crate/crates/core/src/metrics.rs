//! Latency, token, cost and concurrency metrics over completed ledgers.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{BaselineCosts, TokenTally};
use crate::clock::Millis;
use crate::engine::{RoundLog, RoundTerminal};
use crate::ledger::{CallRecord, PriceTable, Role};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {sp} speculative vs {seq} baseline values")]
    LengthMismatch { sp: usize, seq: usize },
    #[error("baseline value {index} is not positive")]
    NonPositiveBaseline { index: usize },
    #[error("no tasks to report")]
    Empty,
}

fn check(sp: &[f64], seq: &[f64]) -> Result<(), MetricsError> {
    if sp.len() != seq.len() {
        return Err(MetricsError::LengthMismatch { sp: sp.len(), seq: seq.len() });
    }
    if sp.is_empty() {
        return Err(MetricsError::Empty);
    }
    match seq.iter().position(|&s| !(s > 0.0)) {
        Some(index) => Err(MetricsError::NonPositiveBaseline { index }),
        None => Ok(()),
    }
}

/// Mean time saving in percent; positive is faster.
pub fn delta_time(sp: &[f64], seq: &[f64]) -> Result<f64, MetricsError> {
    check(sp, seq)?;
    Ok(sp.iter().zip(seq).map(|(a, b)| 1.0 - a / b).sum::<f64>() / sp.len() as f64 * 100.0)
}

/// Mean relative increase in percent; used for prompt tokens, generation
/// tokens and cost alike.
pub fn delta_tokens(sp: &[f64], seq: &[f64]) -> Result<f64, MetricsError> {
    check(sp, seq)?;
    Ok(sp.iter().zip(seq).map(|(a, b)| a / b - 1.0).sum::<f64>() / sp.len() as f64 * 100.0)
}

/// Mean relative cost increase in percent, with per-task costs
/// `PC + GC` priced by role.
pub fn delta_cost(sp: &[TokenTally], seq: &[TokenTally], prices: &PriceTable) -> Result<f64, MetricsError> {
    let a: Vec<f64> = sp.iter().map(|t| t.cost(prices)).collect();
    let b: Vec<f64> = seq.iter().map(|t| t.cost(prices)).collect();
    delta_tokens(&a, &b)
}

pub fn ledger_tokens(ledger: &[CallRecord]) -> TokenTally {
    let mut t = TokenTally::default();
    for r in ledger {
        t.add(r.role, r.prompt_tokens, r.gen_tokens);
    }
    t
}

/// Peak number of overlapping calls. Intervals are half-open, so a call
/// ending when another starts does not overlap it.
pub fn peak_concurrency(ledger: &[CallRecord]) -> usize {
    let mut events: Vec<(Millis, i32)> = Vec::with_capacity(ledger.len() * 2);
    for r in ledger {
        if r.end_ms > r.start_ms {
            events.push((r.start_ms, 1));
            events.push((r.end_ms, -1));
        }
    }
    // ends (-1) sort before starts (+1) at equal times
    events.sort_unstable();
    let (mut cur, mut peak) = (0i32, 0i32);
    for (_, d) in events {
        cur += d;
        peak = peak.max(cur);
    }
    peak as usize
}

pub fn mean_k(rounds: &[RoundLog]) -> f64 {
    if rounds.is_empty() {
        return 0.0;
    }
    rounds.iter().map(|r| r.k as f64).sum::<f64>() / rounds.len() as f64
}

/// Token counts split by role and kind; signed so it can hold differences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRow {
    pub approx_prompt: i64,
    pub approx_gen: i64,
    pub target_prompt: i64,
    pub target_gen: i64,
    pub total_prompt: i64,
    pub total_gen: i64,
    pub total: i64,
}

impl From<TokenTally> for TokenRow {
    fn from(t: TokenTally) -> Self {
        Self::new(t.approx_prompt as i64, t.approx_gen as i64, t.target_prompt as i64, t.target_gen as i64)
    }
}

impl TokenRow {
    pub fn new(approx_prompt: i64, approx_gen: i64, target_prompt: i64, target_gen: i64) -> Self {
        Self {
            approx_prompt,
            approx_gen,
            target_prompt,
            target_gen,
            total_prompt: approx_prompt + target_prompt,
            total_gen: approx_gen + target_gen,
            total: approx_prompt + approx_gen + target_prompt + target_gen,
        }
    }

    pub fn minus(&self, o: &TokenRow) -> TokenRow {
        TokenRow::new(
            self.approx_prompt - o.approx_prompt,
            self.approx_gen - o.approx_gen,
            self.target_prompt - o.target_prompt,
            self.target_gen - o.target_gen,
        )
    }

    pub fn plus(&self, o: &TokenRow) -> TokenRow {
        TokenRow::new(
            self.approx_prompt + o.approx_prompt,
            self.approx_gen + o.approx_gen,
            self.target_prompt + o.target_prompt,
            self.target_gen + o.target_gen,
        )
    }
}

/// Split of a ledger into the calls that produced committed steps and the
/// calls wasted on invalidated speculation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub useful: TokenTally,
    pub redundant: TokenTally,
}

/// Classify every record of one task. For each committed step, the first
/// approx call and the first target call issued for it by the round that
/// committed it are useful; every other record is redundant.
pub fn census(ledger: &[CallRecord], rounds: &[RoundLog]) -> Census {
    let mut committing: HashMap<usize, u64> = HashMap::new();
    for r in rounds {
        let n = r.matched_count
            + usize::from(matches!(r.terminal, RoundTerminal::Mismatch | RoundTerminal::Sequential));
        for step in r.start_step..r.start_step + n {
            committing.insert(step, r.round_id);
        }
    }
    let mut seen: HashSet<(Role, usize)> = HashSet::new();
    let mut out = Census::default();
    for rec in ledger {
        let useful = committing.get(&rec.step) == Some(&rec.round_id) && seen.insert((rec.role, rec.step));
        let bucket = if useful { &mut out.useful } else { &mut out.redundant };
        bucket.add(rec.role, rec.prompt_tokens, rec.gen_tokens);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub actual: TokenRow,
    /// Approx-sequential plus target-sequential tokens.
    pub normal: TokenRow,
    /// `actual - normal`.
    pub delta: TokenRow,
    /// Redundant tokens from the census, by role and kind.
    pub redundant: TokenRow,
}

impl Breakdown {
    pub fn plus(&self, o: &Breakdown) -> Breakdown {
        Breakdown {
            actual: self.actual.plus(&o.actual),
            normal: self.normal.plus(&o.normal),
            delta: self.delta.plus(&o.delta),
            redundant: self.redundant.plus(&o.redundant),
        }
    }
}

pub fn cost_breakdown(ledger: &[CallRecord], rounds: &[RoundLog], normal: &TokenTally) -> Breakdown {
    let actual = TokenRow::from(ledger_tokens(ledger));
    let normal = TokenRow::from(*normal);
    Breakdown { actual, normal, delta: actual.minus(&normal), redundant: census(ledger, rounds).redundant.into() }
}

/// Everything the report needs about one executed task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task_id: String,
    pub total_time_ms: Millis,
    pub ledger: Vec<CallRecord>,
    pub rounds: Vec<RoundLog>,
    pub baseline: BaselineCosts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub time_ms: f64,
    pub prompt_tokens: f64,
    pub gen_tokens: f64,
    pub cost: f64,
}

impl RunTotals {
    pub fn of(tasks: &[TaskRecord], prices: &PriceTable) -> Self {
        let mut t = RunTotals::default();
        for task in tasks {
            let tok = ledger_tokens(&task.ledger);
            t.time_ms += task.total_time_ms as f64;
            t.prompt_tokens += tok.total_prompt() as f64;
            t.gen_tokens += tok.total_gen() as f64;
            t.cost += tok.cost(prices);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub time: f64,
    pub prompt: f64,
    pub gen: f64,
    pub cost: f64,
}

/// Aggregate ratios of a run against a reference run.
pub fn ratios(run: &RunTotals, reference: &RunTotals) -> Ratios {
    Ratios {
        time: run.time_ms / reference.time_ms,
        prompt: run.prompt_tokens / reference.prompt_tokens,
        gen: run.gen_tokens / reference.gen_tokens,
        cost: run.cost / reference.cost,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub n_tasks: usize,
    pub delta_time: f64,
    pub delta_prompt: f64,
    pub delta_gen: f64,
    pub delta_cost: f64,
    pub ratios: Ratios,
    pub mean_concurrency: f64,
    pub mean_k: f64,
    pub totals: RunTotals,
    pub breakdown: Breakdown,
}

pub fn build_report(
    policy: &str,
    tasks: &[TaskRecord],
    reference: &RunTotals,
    prices: &PriceTable,
) -> Result<RunReport, MetricsError> {
    if tasks.is_empty() {
        return Err(MetricsError::Empty);
    }
    let tallies: Vec<TokenTally> = tasks.iter().map(|t| ledger_tokens(&t.ledger)).collect();
    let seq: Vec<TokenTally> = tasks.iter().map(|t| t.baseline.tokens).collect();
    let pick = |v: &[TokenTally], f: fn(&TokenTally) -> u64| v.iter().map(|t| f(t) as f64).collect::<Vec<_>>();
    let sp_time: Vec<f64> = tasks.iter().map(|t| t.total_time_ms as f64).collect();
    let seq_time: Vec<f64> = tasks.iter().map(|t| t.baseline.time_ms as f64).collect();
    let all_rounds: Vec<RoundLog> = tasks.iter().flat_map(|t| t.rounds.iter().cloned()).collect();
    let breakdown = tasks
        .iter()
        .map(|t| cost_breakdown(&t.ledger, &t.rounds, &t.baseline.tokens))
        .fold(Breakdown::default(), |a, b| a.plus(&b));
    let totals = RunTotals::of(tasks, prices);
    Ok(RunReport {
        policy: policy.to_string(),
        n_tasks: tasks.len(),
        delta_time: delta_time(&sp_time, &seq_time)?,
        delta_prompt: delta_tokens(&pick(&tallies, TokenTally::total_prompt), &pick(&seq, TokenTally::total_prompt))?,
        delta_gen: delta_tokens(&pick(&tallies, TokenTally::total_gen), &pick(&seq, TokenTally::total_gen))?,
        delta_cost: delta_cost(&tallies, &seq, prices)?,
        ratios: ratios(&totals, reference),
        mean_concurrency: tasks.iter().map(|t| peak_concurrency(&t.ledger) as f64).sum::<f64>() / tasks.len() as f64,
        mean_k: mean_k(&all_rounds),
        totals,
        breakdown,
    })
}
