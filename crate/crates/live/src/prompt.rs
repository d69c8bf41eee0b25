//! Plain-text prompt templates with `{{task}}` and `{{history}}` slots.

use std::path::Path;

use specplan_core::PlanState;

use crate::LiveError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn load(path: &Path) -> Result<Self, LiveError> {
        std::fs::read_to_string(path)
            .map(Self::new)
            .map_err(|source| LiveError::Io { path: path.to_path_buf(), source })
    }

    pub fn render(&self, state: &PlanState) -> String {
        let history = state.render_history();
        let history = if history.is_empty() { "(none yet)\n".to_string() } else { history };
        self.text.replace("{{task}}", state.task_prompt()).replace("{{history}}", history.trim_end())
    }
}

/// Used when no template file is configured.
pub const DEFAULT_TEMPLATE: &str = "\
You are planning a sequence of tool calls.
Task: {{task}}
Steps so far:
{{history}}
Reply with the next step on one line as `Action: <tool> <arguments>`, or `Action: FINISH` when done.";
