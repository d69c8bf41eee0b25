//! Wall-clock driver for the round machine.
//!
//! Every agent call and tool execution runs as its own tokio task so it can
//! be aborted on its own. Completions come back over a channel; the
//! coordinator alone touches the machine, the ledger and the policy.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use specplan_core::engine::{Command, ExecKind, KPolicy, RoundMachine, TaskRecorder, TaskResult};
use specplan_core::{Action, CallRecord, CallStatus, ExactMatch, MatchPredicate, Millis, Role};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::agents::{LiveAgents, LiveTask};
use crate::client::{parse_action, Completion, Progress};
use crate::LiveError;

pub struct LiveOptions {
    pub first_round_id: u64,
    /// Offset added to task-local times when talking to the policy.
    pub time_base_ms: Millis,
    /// Committing this action ends the task.
    pub stop_action: Option<Action>,
    pub match_pred: Arc<dyn MatchPredicate>,
}

impl Default for LiveOptions {
    fn default() -> Self {
        Self { first_round_id: 0, time_base_ms: 0, stop_action: None, match_pred: Arc::new(ExactMatch) }
    }
}

enum Msg {
    Call { id: u64, end_ms: Millis, result: Result<Completion, LiveError> },
    Exec { id: u64, observation: String },
}

struct CallTask {
    role: Role,
    slot: usize,
    step: usize,
    start_ms: Millis,
    progress: Arc<Mutex<Progress>>,
    handle: JoinHandle<()>,
}

struct ExecTask {
    slot: usize,
    kind: ExecKind,
    handle: JoinHandle<()>,
}

struct Coordinator<'a> {
    agents: &'a LiveAgents,
    origin: Instant,
    tx: mpsc::UnboundedSender<Msg>,
    next_id: u64,
    calls: HashMap<u64, CallTask>,
    execs: HashMap<u64, ExecTask>,
    ledger: Vec<CallRecord>,
}

fn elapsed_ms(origin: Instant) -> Millis {
    origin.elapsed().as_millis() as Millis
}

/// Ledger tokens for a call: server usage when reported, otherwise the
/// streamed chunk count flagged as missing usage.
fn billed(progress: &Progress) -> (u64, u64, bool) {
    match progress.usage {
        Some(u) => (u.prompt_tokens, u.completion_tokens, false),
        None => (0, progress.chunks, true),
    }
}

impl Coordinator<'_> {
    fn now(&self) -> Millis {
        elapsed_ms(self.origin)
    }

    fn perform(&mut self, machine: &RoundMachine, round_id: u64, cmds: Vec<Command>) {
        for cmd in cmds {
            match cmd {
                Command::Launch { role, slot, prefix } => {
                    let id = self.next_id;
                    self.next_id += 1;
                    let cfg = self.agents.role(role);
                    let prompt = cfg.template.render(&prefix);
                    let model = cfg.model.clone();
                    let client = Arc::clone(&self.agents.client);
                    let progress = Arc::new(Mutex::new(Progress::default()));
                    let shared = Arc::clone(&progress);
                    let (tx, origin) = (self.tx.clone(), self.origin);
                    let handle = tokio::spawn(async move {
                        let result = client.stream(&model, &prompt, &shared).await;
                        let _ = tx.send(Msg::Call { id, end_ms: elapsed_ms(origin), result });
                    });
                    let start_ms = self.now();
                    self.calls.insert(id, CallTask { role, slot, step: machine.step_of(slot), start_ms, progress, handle });
                }
                Command::Execute { slot, kind, prefix, action } => {
                    let id = self.next_id;
                    self.next_id += 1;
                    let fut = self.agents.executor.execute(&prefix, &action);
                    let tx = self.tx.clone();
                    let handle = tokio::spawn(async move {
                        let observation = fut.await;
                        let _ = tx.send(Msg::Exec { id, observation });
                    });
                    self.execs.insert(id, ExecTask { slot, kind, handle });
                }
                Command::Cancel { role, slot } => {
                    let Some(id) = self.calls.iter().find(|(_, c)| c.role == role && c.slot == slot).map(|(id, _)| *id)
                    else {
                        continue;
                    };
                    let call = self.calls.remove(&id).expect("present");
                    call.handle.abort();
                    let progress = call.progress.lock().unwrap_or_else(|e| e.into_inner()).clone();
                    let (prompt_tokens, gen_tokens, usage_missing) = billed(&progress);
                    self.ledger.push(CallRecord {
                        role,
                        step: call.step,
                        start_ms: call.start_ms,
                        end_ms: self.now(),
                        prompt_tokens,
                        gen_tokens,
                        status: CallStatus::Canceled,
                        round_id,
                        usage_missing,
                    });
                }
                Command::AbandonExec { slot, kind } => {
                    if let Some(id) = self.execs.iter().find(|(_, e)| e.slot == slot && e.kind == kind).map(|(id, _)| *id) {
                        self.execs.remove(&id).expect("present").handle.abort();
                    }
                }
            }
        }
    }

    fn abort_all(&mut self) {
        for (_, c) in self.calls.drain() {
            c.handle.abort();
        }
        for (_, e) in self.execs.drain() {
            e.handle.abort();
        }
    }

    /// Apply one message; errors carry the failing call's step and role.
    fn apply(&mut self, msg: Msg, machine: &mut RoundMachine, round_id: u64) -> Result<(), (usize, Role, LiveError)> {
        match msg {
            Msg::Call { id, end_ms, result } => {
                // stale: canceled after it finished
                let Some(call) = self.calls.remove(&id) else { return Ok(()) };
                let completion = result.map_err(|e| (call.step, call.role, e))?;
                let progress = Progress { text: completion.text.clone(), chunks: completion.chunks, usage: completion.usage };
                let (prompt_tokens, gen_tokens, usage_missing) = billed(&progress);
                self.ledger.push(CallRecord {
                    role: call.role,
                    step: call.step,
                    start_ms: call.start_ms,
                    end_ms: end_ms.max(call.start_ms),
                    prompt_tokens,
                    gen_tokens,
                    status: CallStatus::Completed,
                    round_id,
                    usage_missing,
                });
                let action = parse_action(&completion.text).map_err(|e| (call.step, call.role, e))?;
                machine.on_call_done(call.role, call.slot, action);
            }
            Msg::Exec { id, observation } => {
                if let Some(exec) = self.execs.remove(&id) {
                    machine.on_exec_done(exec.slot, exec.kind, observation);
                }
            }
        }
        Ok(())
    }
}

/// Run one task live until the stop action is committed or `max_steps`
/// steps are done. Times in the result are milliseconds since task start.
pub async fn run_live_task(
    agents: &LiveAgents,
    policy: &mut dyn KPolicy,
    task: &LiveTask,
    opts: &LiveOptions,
) -> Result<TaskResult, LiveError> {
    let (tx, mut rx) = mpsc::unbounded_channel();
    let mut co = Coordinator {
        agents,
        origin: Instant::now(),
        tx,
        next_id: 0,
        calls: HashMap::new(),
        execs: HashMap::new(),
        ledger: Vec::new(),
    };
    let mut rec = TaskRecorder::new(&task.task_id, &task.prompt, opts.first_round_id, opts.time_base_ms);

    while rec.state().step_index() < task.max_steps {
        let t0 = co.now();
        let round_id = rec.round_id();
        let choice = policy.choose_k(rec.state(), rec.policy_time(t0))?;
        let k_eff = choice.k.min(task.max_steps - rec.state().step_index());
        rec.begin_round(policy, choice.k, t0);
        let mut machine =
            RoundMachine::new(rec.state().clone(), k_eff, true).with_stop_action(opts.stop_action.clone());
        let cmds = machine.start();
        co.perform(&machine, round_id, cmds);

        while !machine.is_done() {
            let first = rx.recv().await.expect("coordinator holds a sender");
            let mut batch = vec![first];
            while let Ok(m) = rx.try_recv() {
                batch.push(m);
            }
            for msg in batch {
                if let Err((step, role, source)) = co.apply(msg, &mut machine, round_id) {
                    co.abort_all();
                    return Err(LiveError::Step { step, role, source: Box::new(source), partial_ledger: co.ledger });
                }
            }
            let now = co.now();
            let cmds = machine.advance(now, opts.match_pred.as_ref());
            co.perform(&machine, round_id, cmds);
        }
        let out = machine.finish();
        let stopped = out.stopped;
        rec.end_round(policy, choice.k, k_eff, t0, out, |s| s.step_index() >= task.max_steps);
        if stopped {
            break;
        }
    }
    co.abort_all();
    let now = co.now();
    Ok(rec.finish(policy, now, co.ledger))
}
