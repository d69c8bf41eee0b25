//! Virtual-time driver for [`RoundMachine`].

use std::collections::HashMap;

use super::machine::{Command, ExecKind, RoundMachine};
use super::recorder::TaskRecorder;
use super::{EngineError, KPolicy, TaskResult};
use crate::action::{ExactMatch, MatchPredicate};
use crate::agents::{AgentError, CallReply, ExecReply, SimAgents};
use crate::clock::{EventId, Millis, VirtualClock};
use crate::ledger::{CallRecord, CallStatus, Role};

pub struct TaskContext<'a> {
    pub task_id: &'a str,
    /// Offset added to task-local times when talking to the policy.
    pub time_base_ms: Millis,
    pub first_round_id: u64,
    pub match_pred: &'a dyn MatchPredicate,
}

impl<'a> TaskContext<'a> {
    pub fn new(task_id: &'a str) -> Self {
        Self { task_id, time_base_ms: 0, first_round_id: 0, match_pred: &ExactMatch }
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    CallDone { role: Role, slot: usize },
    ExecDone { slot: usize, kind: ExecKind },
    KReady,
}

struct Pending {
    event: EventId,
    start: Millis,
    reply: CallReply,
}

/// Ledger entry for a call canceled at `now`: the prompt is charged in full,
/// generation pro rata of the elapsed fraction, rounded down.
pub fn cancel_record(
    role: Role,
    step: usize,
    round_id: u64,
    start: Millis,
    now: Millis,
    reply: &CallReply,
) -> CallRecord {
    let elapsed = now.saturating_sub(start).min(reply.latency_ms);
    let gen = if reply.latency_ms == 0 {
        reply.gen_tokens
    } else {
        (reply.gen_tokens as u128 * elapsed as u128 / reply.latency_ms as u128) as u64
    };
    CallRecord {
        role,
        step,
        start_ms: start,
        end_ms: now,
        prompt_tokens: reply.prompt_tokens,
        gen_tokens: gen,
        status: CallStatus::Canceled,
        round_id,
        usage_missing: false,
    }
}

struct Driver {
    clock: VirtualClock<Event>,
    calls: HashMap<(Role, usize), Pending>,
    execs: HashMap<(usize, ExecKind), (EventId, ExecReply)>,
    ledger: Vec<CallRecord>,
}

impl Driver {
    fn perform(
        &mut self,
        m: &RoundMachine,
        agents: &mut dyn SimAgents,
        round_id: u64,
        cmds: Vec<Command>,
    ) -> Result<(), (usize, AgentError)> {
        let now = self.clock.now();
        for cmd in cmds {
            match cmd {
                Command::Launch { role, slot, prefix } => {
                    let reply = agents.call(role, &prefix).map_err(|e| (m.step_of(slot), e))?;
                    let event = self.clock.schedule_after(reply.latency_ms, Event::CallDone { role, slot });
                    self.calls.insert((role, slot), Pending { event, start: now, reply });
                }
                Command::Execute { slot, kind, prefix, action } => {
                    let reply = agents.execute(&prefix, &action).map_err(|e| (m.step_of(slot), e))?;
                    let event = self.clock.schedule_after(reply.latency_ms, Event::ExecDone { slot, kind });
                    self.execs.insert((slot, kind), (event, reply));
                }
                Command::Cancel { role, slot } => {
                    if let Some(p) = self.calls.remove(&(role, slot)) {
                        self.clock.cancel(p.event);
                        self.ledger.push(cancel_record(role, m.step_of(slot), round_id, p.start, now, &p.reply));
                    }
                }
                Command::AbandonExec { slot, kind } => {
                    if let Some((event, _)) = self.execs.remove(&(slot, kind)) {
                        self.clock.cancel(event);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Run one task to completion on a fresh virtual clock.
pub fn run_task(
    agents: &mut dyn SimAgents,
    policy: &mut dyn KPolicy,
    ctx: &TaskContext<'_>,
) -> Result<TaskResult, EngineError> {
    let horizon = agents.horizon();
    let mut rec = TaskRecorder::new(ctx.task_id, agents.task_prompt(), ctx.first_round_id, ctx.time_base_ms);
    let mut driver =
        Driver { clock: VirtualClock::new(), calls: HashMap::new(), execs: HashMap::new(), ledger: Vec::new() };

    while rec.state().step_index() < horizon {
        let now = driver.clock.now();
        let round_id = rec.round_id();
        let choice = policy.choose_k(rec.state(), rec.policy_time(now))?;
        let k_eff = choice.k.min(horizon - rec.state().step_index());
        rec.begin_round(policy, choice.k, now);
        let k_ready = choice.k == 0 || choice.latency_ms == 0;
        let mut machine = RoundMachine::new(rec.state().clone(), k_eff, k_ready);
        let k_event = (!k_ready).then(|| driver.clock.schedule_after(choice.latency_ms, Event::KReady));

        let backend_err = |(step, source): (usize, AgentError), ledger: &[CallRecord]| EngineError::Backend {
            step,
            source,
            partial_ledger: ledger.to_vec(),
        };
        let start_cmds = machine.start();
        if let Err(e) = driver.perform(&machine, agents, round_id, start_cmds) {
            return Err(backend_err(e, &driver.ledger));
        }
        while !machine.is_done() {
            let Some((t, batch)) = driver.clock.pop_batch() else {
                return Err(EngineError::Stalled { round_id });
            };
            for (_, ev) in batch {
                match ev {
                    Event::CallDone { role, slot } => {
                        let p = driver.calls.remove(&(role, slot)).expect("pending call");
                        driver.ledger.push(CallRecord {
                            role,
                            step: machine.step_of(slot),
                            start_ms: p.start,
                            end_ms: t,
                            prompt_tokens: p.reply.prompt_tokens,
                            gen_tokens: p.reply.gen_tokens,
                            status: CallStatus::Completed,
                            round_id,
                            usage_missing: false,
                        });
                        machine.on_call_done(role, slot, p.reply.action);
                    }
                    Event::ExecDone { slot, kind } => {
                        let (_, reply) = driver.execs.remove(&(slot, kind)).expect("pending exec");
                        machine.on_exec_done(slot, kind, reply.observation);
                    }
                    Event::KReady => machine.on_k_ready(),
                }
            }
            let cmds = machine.advance(t, ctx.match_pred);
            if let Err(e) = driver.perform(&machine, agents, round_id, cmds) {
                return Err(backend_err(e, &driver.ledger));
            }
        }
        if let Some(id) = k_event {
            driver.clock.cancel(id);
        }
        debug_assert!(driver.calls.is_empty() && driver.execs.is_empty());
        rec.end_round(policy, choice.k, k_eff, now, machine.finish(), |s| s.step_index() >= horizon);
    }
    let now = driver.clock.now();
    Ok(rec.finish(policy, now, driver.ledger))
}
