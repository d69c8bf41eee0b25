//! Hashed bag-of-n-grams features of a serialized plan state.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::state::PlanState;

pub const DEFAULT_DIMENSION: usize = 1 << 16;

/// Sparse vector with sorted, unique indices below its dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dimension: usize,
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, x)| weights[i as usize] * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, x)| x * x).sum::<f64>().sqrt()
    }
}

fn bucket(namespace: &str, text: &str, dimension: usize) -> u32 {
    let mut h = FnvHasher::default();
    h.write(namespace.as_bytes());
    h.write(text.as_bytes());
    (h.finish() % dimension as u64) as u32
}

fn add_ngrams(counts: &mut BTreeMap<u32, f64>, ns: (&str, &str), text: &str, dimension: usize) {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    for t in &tokens {
        *counts.entry(bucket(ns.0, t, dimension)).or_default() += 1.0;
    }
    for w in tokens.windows(2) {
        *counts.entry(bucket(ns.1, &format!("{} {}", w[0], w[1]), dimension)).or_default() += 1.0;
    }
}

/// Unigram and bigram counts over the rendered state, plus a separate
/// namespace for the most recent step, L2-normalized.
pub fn featurize(state: &PlanState, dimension: usize) -> FeatureVector {
    let mut counts = BTreeMap::new();
    add_ngrams(&mut counts, ("u:", "b:"), &state.render(), dimension);
    if let Some(last) = state.last() {
        let recent = format!("{} {}", last.action, last.observation);
        add_ngrams(&mut counts, ("last:u:", "last:b:"), &recent, dimension);
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let entries = counts.into_iter().map(|(i, c)| (i, if norm > 0.0 { c / norm } else { 0.0 })).collect();
    FeatureVector { dimension, entries }
}
