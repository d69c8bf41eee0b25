//! In-process chat-completions server for smoke tests and offline demos.
//!
//! It serves a scripted plan: the target model always answers the plan's
//! action for the requested step, the draft model answers the same action
//! except at configured mismatch steps. The step is one more than the
//! number of `step N:` lines in the prompt. Replies stream one token per
//! SSE chunk with a fixed delay, and every request is logged, including
//! whether the client hung up before the stream finished.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

#[derive(Debug, Clone)]
pub struct MockConfig {
    /// Target action for each step.
    pub plan: Vec<String>,
    pub approx_model: String,
    /// Steps (1-based) where the draft disagrees with the target.
    pub mismatch_steps: Vec<usize>,
    pub approx_chunk_delay: Duration,
    pub target_chunk_delay: Duration,
    /// Reasoning tokens the target emits before its action.
    pub target_thought_tokens: usize,
    pub report_usage: bool,
    /// Required bearer token, if any.
    pub api_key: Option<String>,
    /// Answer every request with this status instead.
    pub force_status: Option<u16>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            plan: vec!["search flights".into(), "book flight 2".into(), "FINISH".into()],
            approx_model: "draft".into(),
            mismatch_steps: Vec::new(),
            approx_chunk_delay: Duration::from_millis(2),
            target_chunk_delay: Duration::from_millis(5),
            target_thought_tokens: 6,
            report_usage: true,
            api_key: None,
            force_status: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestEntry {
    pub model: String,
    pub step: usize,
    pub prompt_words: u64,
    pub chunks_sent: u64,
    pub completed: bool,
    /// The client disconnected before the final chunk.
    pub aborted: bool,
}

struct Shared {
    cfg: MockConfig,
    log: Mutex<Vec<RequestEntry>>,
}

pub struct MockServer {
    pub base_url: String,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub async fn start(cfg: MockConfig) -> std::io::Result<Self> {
        let shared = Arc::new(Shared { cfg, log: Mutex::new(Vec::new()) });
        let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(Arc::clone(&shared));
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self { base_url: format!("http://{addr}"), shared, shutdown: Some(tx), handle: Some(handle) })
    }

    pub fn requests(&self) -> Vec<RequestEntry> {
        self.shared.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn aborted(&self) -> Vec<RequestEntry> {
        self.requests().into_iter().filter(|r| r.aborted).collect()
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            h.abort();
            let _ = h.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            h.abort();
        }
    }
}

fn step_of(prompt: &str) -> usize {
    let done = prompt
        .lines()
        .filter(|l| {
            l.strip_prefix("step ")
                .and_then(|r| r.split_once(':'))
                .is_some_and(|(n, _)| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
        })
        .count();
    done + 1
}

/// Marks the log entry aborted if the body is dropped before it finishes.
struct StreamGuard {
    shared: Arc<Shared>,
    index: usize,
    finished: bool,
}

impl StreamGuard {
    fn update(&self, f: impl FnOnce(&mut RequestEntry)) {
        let mut log = self.shared.log.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut log[self.index]);
    }
}

impl Drop for StreamGuard {
    fn drop(&mut self) {
        if !self.finished {
            self.update(|e| e.aborted = true);
        }
    }
}

struct StreamState {
    guard: StreamGuard,
    events: Vec<String>,
    next: usize,
    delay: Duration,
    content_chunks: usize,
}

async fn chat(State(shared): State<Arc<Shared>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let cfg = &shared.cfg;
    if let Some(key) = &cfg.api_key {
        let ok = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == format!("Bearer {key}"));
        if !ok {
            return (StatusCode::UNAUTHORIZED, Json(json!({"error": {"message": "invalid api key"}}))).into_response();
        }
    }
    if let Some(code) = cfg.force_status {
        let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return (status, Json(json!({"error": {"message": "forced failure"}}))).into_response();
    }

    let model = body["model"].as_str().unwrap_or_default().to_string();
    let prompt: String = body["messages"]
        .as_array()
        .map(|ms| ms.iter().filter_map(|m| m["content"].as_str()).collect::<Vec<_>>().join("\n"))
        .unwrap_or_default();
    let step = step_of(&prompt);
    let is_approx = model == cfg.approx_model;
    let action = cfg.plan.get(step - 1).cloned().unwrap_or_else(|| "FINISH".into());
    let action = if is_approx && cfg.mismatch_steps.contains(&step) { format!("guess {step}") } else { action };

    let mut tokens: Vec<String> = Vec::new();
    if !is_approx && cfg.target_thought_tokens > 0 {
        tokens.push("Thought:".into());
        tokens.extend((1..cfg.target_thought_tokens).map(|_| " hmm".to_string()));
        tokens.push("\n".into());
    }
    tokens.push("Action:".into());
    tokens.extend(action.split_whitespace().map(|w| format!(" {w}")));

    let prompt_words = prompt.split_whitespace().count() as u64;
    let mut events: Vec<String> = tokens
        .iter()
        .map(|t| format!("data: {}\n\n", json!({"choices": [{"index": 0, "delta": {"content": t}}]})))
        .collect();
    let content_chunks = events.len();
    let include_usage = body["stream_options"]["include_usage"].as_bool().unwrap_or(false);
    if cfg.report_usage && include_usage {
        let usage = json!({"prompt_tokens": prompt_words, "completion_tokens": content_chunks});
        events.push(format!("data: {}\n\n", json!({"choices": [], "usage": usage})));
    }
    events.push("data: [DONE]\n\n".into());

    let index = {
        let mut log = shared.log.lock().unwrap_or_else(|e| e.into_inner());
        log.push(RequestEntry { model, step, prompt_words, chunks_sent: 0, completed: false, aborted: false });
        log.len() - 1
    };
    let delay = if is_approx { cfg.approx_chunk_delay } else { cfg.target_chunk_delay };
    let state = StreamState {
        guard: StreamGuard { shared: Arc::clone(&shared), index, finished: false },
        events,
        next: 0,
        delay,
        content_chunks,
    };
    let stream = futures::stream::unfold(state, |mut st| async move {
        if st.next >= st.events.len() {
            return None;
        }
        if st.next < st.content_chunks && !st.delay.is_zero() {
            tokio::time::sleep(st.delay).await;
        }
        let ev = st.events[st.next].clone();
        st.next += 1;
        if st.next <= st.content_chunks {
            st.guard.update(|e| e.chunks_sent += 1);
        }
        if st.next == st.events.len() {
            st.guard.finished = true;
            st.guard.update(|e| e.completed = true);
        }
        Some((Ok::<_, Infallible>(Bytes::from(ev)), st))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "text/event-stream")
        .body(Body::from_stream(stream))
        .expect("static response parts")
}
