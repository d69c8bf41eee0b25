//! Call ledger entries, prices, and JSONL persistence.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Approx,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallStatus {
    Completed,
    Canceled,
}

/// One agent invocation.
///
/// Times are milliseconds relative to the start of the task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: Role,
    pub step: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub prompt_tokens: u64,
    pub gen_tokens: u64,
    pub status: CallStatus,
    pub round_id: u64,
    /// Set only by live backends when the server never reported usage for
    /// this call; the token fields then hold only what was observed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub usage_missing: bool,
}

impl CallRecord {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    pub fn is_canceled(&self) -> bool {
        self.status == CallStatus::Canceled
    }
}

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("price `{field}` must be a finite non-negative number, got {value}")]
    Negative { field: &'static str, value: f64 },
}

/// Prices in currency units per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub approx_prompt: f64,
    pub approx_gen: f64,
    pub target_prompt: f64,
    pub target_gen: f64,
}

impl Default for PriceTable {
    fn default() -> Self {
        Self::gpt_4_1_mini()
    }
}

impl PriceTable {
    pub fn new(approx_prompt: f64, approx_gen: f64, target_prompt: f64, target_gen: f64) -> Result<Self, PriceError> {
        let table = Self { approx_prompt, approx_gen, target_prompt, target_gen };
        table.validate()?;
        Ok(table)
    }

    /// GPT-4.1-mini for both agents: $0.40 prompt / $1.60 generation.
    pub fn gpt_4_1_mini() -> Self {
        Self { approx_prompt: 0.40, approx_gen: 1.60, target_prompt: 0.40, target_gen: 1.60 }
    }

    /// DeepSeek-chat drafting ($0.27/$1.10) with DeepSeek-reasoner verifying ($0.55/$2.19).
    pub fn deepseek() -> Self {
        Self { approx_prompt: 0.27, approx_gen: 1.10, target_prompt: 0.55, target_gen: 2.19 }
    }

    pub fn validate(&self) -> Result<(), PriceError> {
        for (field, value) in [
            ("approx_prompt", self.approx_prompt),
            ("approx_gen", self.approx_gen),
            ("target_prompt", self.target_prompt),
            ("target_gen", self.target_gen),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(PriceError::Negative { field, value });
            }
        }
        Ok(())
    }

    pub fn prompt_price(&self, role: Role) -> f64 {
        match role {
            Role::Approx => self.approx_prompt,
            Role::Target => self.target_prompt,
        }
    }

    pub fn gen_price(&self, role: Role) -> f64 {
        match role {
            Role::Approx => self.approx_gen,
            Role::Target => self.target_gen,
        }
    }

    /// Cost of a token count for one role.
    pub fn cost(&self, role: Role, prompt_tokens: u64, gen_tokens: u64) -> f64 {
        prompt_tokens as f64 / 1e6 * self.prompt_price(role) + gen_tokens as f64 / 1e6 * self.gen_price(role)
    }
}

pub fn call_cost(record: &CallRecord, prices: &PriceTable) -> f64 {
    prices.cost(record.role, record.prompt_tokens, record.gen_tokens)
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger io: {0}")]
    Io(#[from] io::Error),
    #[error("ledger line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>, LedgerError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LedgerError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}
