//! Streaming chat-completions client.
//!
//! Requests go to `POST {base_url}/v1/chat/completions` with
//! `stream: true` and `stream_options.include_usage: true`. Each SSE
//! `data:` line is a JSON chunk; `choices[0].delta.content` is appended to
//! the reply and counted as one streamed token, and a chunk carrying
//! `usage.prompt_tokens` / `usage.completion_tokens` supplies the billed
//! counts. `data: [DONE]` ends the stream.

use std::sync::Mutex;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use specplan_core::{normalize_action, Action};

use crate::LiveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// What a call has received so far. Shared with the coordinator so an
/// aborted call can still be billed for what it streamed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Progress {
    pub text: String,
    pub chunks: u64,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub chunks: u64,
    /// `None` when the server never reported usage.
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    base_url: String,
    api_key: String,
    max_tokens: u32,
}

impl ChatClient {
    pub fn new(base_url: &str, api_key: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            http: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            max_tokens,
        }
    }

    /// Reads the bearer token from `env_var`; fails before any request is made.
    pub fn from_env(base_url: &str, env_var: &str, max_tokens: u32) -> Result<Self, LiveError> {
        match std::env::var(env_var) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(base_url, key.trim(), max_tokens)),
            _ => Err(LiveError::Auth(format!("environment variable {env_var} is not set"))),
        }
    }

    pub async fn stream(&self, model: &str, prompt: &str, progress: &Mutex<Progress>) -> Result<Completion, LiveError> {
        let body = json!({
            "model": model,
            "messages": [{ "role": "user", "content": prompt }],
            "stream": true,
            "stream_options": { "include_usage": true },
            "max_tokens": self.max_tokens,
        });
        let resp = self
            .http
            .post(format!("{}/v1/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            let body = resp.text().await.unwrap_or_default();
            return Err(LiveError::Auth(format!("HTTP {}: {}", status.as_u16(), body.trim())));
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(LiveError::Http { status: status.as_u16(), body });
        }

        let mut bytes = resp.bytes_stream();
        let mut buf: Vec<u8> = Vec::new();
        while let Some(chunk) = bytes.next().await {
            buf.extend_from_slice(&chunk?);
            while let Some(pos) = buf.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = buf.drain(..=pos).collect();
                let line = String::from_utf8_lossy(&line);
                if handle_line(line.trim(), progress)? {
                    return Ok(snapshot(progress));
                }
            }
        }
        if !buf.is_empty() {
            let line = String::from_utf8_lossy(&buf).to_string();
            handle_line(line.trim(), progress)?;
        }
        Ok(snapshot(progress))
    }
}

fn snapshot(progress: &Mutex<Progress>) -> Completion {
    let p = progress.lock().unwrap_or_else(|e| e.into_inner());
    Completion { text: p.text.clone(), chunks: p.chunks, usage: p.usage }
}

/// Returns true at `[DONE]`.
fn handle_line(line: &str, progress: &Mutex<Progress>) -> Result<bool, LiveError> {
    let Some(data) = line.strip_prefix("data:") else { return Ok(false) };
    let data = data.trim();
    if data == "[DONE]" {
        return Ok(true);
    }
    let v: Value = serde_json::from_str(data).map_err(|e| LiveError::Parse(format!("bad chunk `{data}`: {e}")))?;
    let mut p = progress.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(content) = v.pointer("/choices/0/delta/content").and_then(Value::as_str) {
        if !content.is_empty() {
            p.text.push_str(content);
            p.chunks += 1;
        }
    }
    if let Some(u) = v.get("usage").filter(|u| !u.is_null()) {
        let usage: Usage = serde_json::from_value(u.clone()).map_err(|e| LiveError::Parse(format!("bad usage: {e}")))?;
        p.usage = Some(usage);
    }
    Ok(false)
}

/// The action of a completion: the last `Action:` line, or the first
/// non-empty line when there is none.
pub fn parse_action(text: &str) -> Result<Action, LiveError> {
    let marked = text.lines().rev().find_map(|l| {
        let l = l.trim();
        l.get(..7).filter(|p| p.eq_ignore_ascii_case("action:")).map(|_| &l[7..])
    });
    let raw = marked.or_else(|| text.lines().map(str::trim).find(|l| !l.is_empty())).unwrap_or("");
    normalize_action(raw).map_err(|_| LiveError::Parse(format!("no action in completion `{}`", text.trim())))
}
