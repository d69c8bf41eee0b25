//! Planning actions and the normalization used by the match predicate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("action text is empty after normalization")]
    EmptyAction,
}

/// A single planning step proposed by an agent.
///
/// The inner text is always normalized: trimmed, single-line, internal
/// whitespace runs collapsed to one space, case preserved.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Action(String);

impl Action {
    pub fn new(raw: &str) -> Result<Self, ActionError> {
        normalize_action(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        normalize_action(&raw).map_err(serde::de::Error::custom)
    }
}

pub fn normalize_action(raw: &str) -> Result<Action, ActionError> {
    let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(ActionError::EmptyAction);
    }
    Ok(Action(text))
}

/// Decides whether a drafted action is accepted as the target's action.
pub trait MatchPredicate: Send + Sync {
    fn matches(&self, approx: &Action, target: &Action) -> bool;
}

/// Exact equality of normalized text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl MatchPredicate for ExactMatch {
    fn matches(&self, approx: &Action, target: &Action) -> bool {
        approx == target
    }
}

impl<F> MatchPredicate for F
where
    F: Fn(&Action, &Action) -> bool + Send + Sync,
{
    fn matches(&self, approx: &Action, target: &Action) -> bool {
        self(approx, target)
    }
}

pub fn verify(approx: &Action, target: &Action, predicate: &dyn MatchPredicate) -> bool {
    predicate.matches(approx, target)
}
