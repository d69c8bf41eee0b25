//! Role configuration, tool execution and live task files.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use futures::future::BoxFuture;
use serde::{Deserialize, Serialize};
use specplan_core::{Action, PlanState, Role};

use crate::client::ChatClient;
use crate::prompt::PromptTemplate;
use crate::LiveError;

#[derive(Debug, Clone)]
pub struct RoleConfig {
    pub model: String,
    pub template: PromptTemplate,
}

/// Runs a committed or drafted action and reports what happened.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, state: &PlanState, action: &Action) -> BoxFuture<'static, String>;
}

/// Acknowledges every action after a fixed delay.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoExecutor {
    pub latency: Duration,
}

impl ToolExecutor for EchoExecutor {
    fn execute(&self, _state: &PlanState, action: &Action) -> BoxFuture<'static, String> {
        let (latency, text) = (self.latency, format!("ok: {action}"));
        Box::pin(async move {
            if !latency.is_zero() {
                tokio::time::sleep(latency).await;
            }
            text
        })
    }
}

#[derive(Clone)]
pub struct LiveAgents {
    pub client: Arc<ChatClient>,
    pub approx: RoleConfig,
    pub target: RoleConfig,
    pub executor: Arc<dyn ToolExecutor>,
}

impl LiveAgents {
    pub fn role(&self, role: Role) -> &RoleConfig {
        match role {
            Role::Approx => &self.approx,
            Role::Target => &self.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveTask {
    pub task_id: String,
    pub prompt: String,
    /// Hard cap on committed steps when the stop action never comes.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    12
}

/// A JSON array of [`LiveTask`].
pub fn load_tasks(path: &Path) -> Result<Vec<LiveTask>, LiveError> {
    let text = std::fs::read_to_string(path).map_err(|source| LiveError::Io { path: path.to_path_buf(), source })?;
    let tasks: Vec<LiveTask> =
        serde_json::from_str(&text).map_err(|e| LiveError::Tasks { path: path.to_path_buf(), message: e.to_string() })?;
    if let Some(t) = tasks.iter().find(|t| t.max_steps == 0) {
        return Err(LiveError::Tasks { path: path.to_path_buf(), message: format!("{}: max_steps must be positive", t.task_id) });
    }
    Ok(tasks)
}
