//! Sans-IO state machine for one draft-and-verify round.
//!
//! The machine decides what to launch, execute, verify and cancel; a driver
//! owns the clock, performs the commands and feeds completions back. The
//! simulated driver and the live driver share it, so both honour the same
//! protocol.
//!
//! Drivers must deliver every completion that happens at one instant before
//! calling [`RoundMachine::advance`]. Verification runs before launches inside
//! `advance`, so a call that would start at the instant a mismatch is
//! detected never starts.

use crate::action::{Action, MatchPredicate};
use crate::clock::Millis;
use crate::ledger::Role;
use crate::state::PlanState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecKind {
    /// Execution of a drafted action before it is verified.
    Optimistic,
    /// Execution of the target's action after a mismatch, or in a
    /// sequential round.
    Committed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Launch { role: Role, slot: usize, prefix: PlanState },
    Execute { slot: usize, kind: ExecKind, prefix: PlanState, action: Action },
    Cancel { role: Role, slot: usize },
    AbandonExec { slot: usize, kind: ExecKind },
}

#[derive(Debug, Clone, PartialEq)]
enum CallState {
    Idle,
    InFlight,
    Done(Action),
    Canceled,
}

#[derive(Debug, Clone, PartialEq)]
enum ExecState {
    Idle,
    Running,
    Done(String),
    Abandoned,
}

#[derive(Debug, Clone)]
struct Slot {
    prefix: Option<PlanState>,
    approx: CallState,
    target: CallState,
    exec: ExecState,
}

impl Slot {
    fn empty() -> Self {
        Self { prefix: None, approx: CallState::Idle, target: CallState::Idle, exec: ExecState::Idle }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Speculating,
    Correcting,
    Done(Millis),
}

/// One verified (or corrected) step of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// 1-based step of the task.
    pub step: usize,
    pub approx_action: Option<Action>,
    pub target_action: Action,
    pub matched: bool,
    pub committed_action: Action,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub outcomes: Vec<StepOutcome>,
    pub end_ms: Millis,
    pub matched_count: usize,
    pub mismatched: bool,
    /// The stop action was committed; the task is over.
    pub stopped: bool,
}

#[derive(Debug, Clone)]
pub struct RoundMachine {
    start_state: PlanState,
    sequential: bool,
    slots: Vec<Slot>,
    verified: usize,
    mismatch: Option<usize>,
    correction: ExecState,
    k_ready: bool,
    phase: Phase,
    stop_on: Option<Action>,
    stopped: bool,
}

impl RoundMachine {
    /// A round of `k` speculative steps, or a sequential target-only step
    /// when `k == 0`. `k` must already be capped at the remaining steps.
    /// When `k_ready` is false, steps beyond the first wait for
    /// [`RoundMachine::on_k_ready`].
    pub fn new(start_state: PlanState, k: usize, k_ready: bool) -> Self {
        let sequential = k == 0;
        let n = k.max(1);
        let mut slots = vec![Slot::empty(); n];
        slots[0].prefix = Some(start_state.clone());
        Self {
            start_state,
            sequential,
            slots,
            verified: 0,
            mismatch: None,
            correction: ExecState::Idle,
            k_ready: k_ready || sequential,
            phase: Phase::Speculating,
            stop_on: None,
            stopped: false,
        }
    }

    /// End the round (and signal task end) as soon as this action is verified.
    pub fn with_stop_action(mut self, stop: Option<Action>) -> Self {
        self.stop_on = stop;
        self
    }

    pub fn start_state(&self) -> &PlanState {
        &self.start_state
    }

    pub fn is_sequential(&self) -> bool {
        self.sequential
    }

    pub fn k_effective(&self) -> usize {
        if self.sequential { 0 } else { self.slots.len() }
    }

    /// Global 1-based step number of a slot.
    pub fn step_of(&self, slot: usize) -> usize {
        self.start_state.step_index() + slot
    }

    pub fn start(&mut self) -> Vec<Command> {
        let prefix = self.start_state.clone();
        if self.sequential {
            self.slots[0].target = CallState::InFlight;
            return vec![Command::Launch { role: Role::Target, slot: 1, prefix }];
        }
        self.slots[0].approx = CallState::InFlight;
        self.slots[0].target = CallState::InFlight;
        vec![
            Command::Launch { role: Role::Approx, slot: 1, prefix: prefix.clone() },
            Command::Launch { role: Role::Target, slot: 1, prefix },
        ]
    }

    pub fn on_call_done(&mut self, role: Role, slot: usize, action: Action) {
        let s = &mut self.slots[slot - 1];
        let st = match role {
            Role::Approx => &mut s.approx,
            Role::Target => &mut s.target,
        };
        if *st == CallState::InFlight {
            *st = CallState::Done(action);
        }
    }

    pub fn on_exec_done(&mut self, slot: usize, kind: ExecKind, observation: String) {
        let st = match kind {
            ExecKind::Optimistic => &mut self.slots[slot - 1].exec,
            ExecKind::Committed => &mut self.correction,
        };
        if *st == ExecState::Running {
            *st = ExecState::Done(observation);
        }
    }

    pub fn on_k_ready(&mut self) {
        self.k_ready = true;
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done(_))
    }

    /// Drive the round forward after a batch of completions at `now`.
    pub fn advance(&mut self, now: Millis, pred: &dyn MatchPredicate) -> Vec<Command> {
        let mut cmds = Vec::new();
        match self.phase {
            Phase::Done(_) => return cmds,
            Phase::Correcting => {
                if matches!(self.correction, ExecState::Done(_)) {
                    self.phase = Phase::Done(now);
                }
                return cmds;
            }
            Phase::Speculating => {}
        }
        if self.sequential {
            self.advance_sequential(now, &mut cmds);
            return cmds;
        }

        // verification, strictly in step order
        while self.verified < self.slots.len() {
            let i = self.verified;
            let (CallState::Done(a), CallState::Done(t)) = (&self.slots[i].approx, &self.slots[i].target) else {
                break;
            };
            let slot = i + 1;
            let is_stop = self.stop_on.as_ref() == Some(t);
            if pred.matches(a, t) {
                self.verified += 1;
                if is_stop {
                    self.stop(slot, now, &mut cmds);
                    return cmds;
                }
                continue;
            }
            self.mismatch = Some(slot);
            if is_stop {
                self.stop(slot, now, &mut cmds);
                return cmds;
            }
            let action = t.clone();
            self.cancel_after(slot, &mut cmds);
            let prefix = self.slots[i].prefix.clone().expect("launched slot has a prefix");
            self.correction = ExecState::Running;
            self.phase = Phase::Correcting;
            cmds.push(Command::Execute { slot, kind: ExecKind::Committed, prefix, action });
            return cmds;
        }

        for i in 0..self.slots.len() {
            if let (CallState::Done(a), ExecState::Idle) = (&self.slots[i].approx, &self.slots[i].exec) {
                let action = a.clone();
                let prefix = self.slots[i].prefix.clone().expect("launched slot has a prefix");
                self.slots[i].exec = ExecState::Running;
                cmds.push(Command::Execute { slot: i + 1, kind: ExecKind::Optimistic, prefix, action });
            }
            if i + 1 < self.slots.len() && self.k_ready && self.slots[i + 1].prefix.is_none() {
                if let (CallState::Done(a), ExecState::Done(obs)) = (&self.slots[i].approx, &self.slots[i].exec) {
                    let prefix = self.slots[i].prefix.as_ref().expect("launched").append(a.clone(), obs.clone());
                    let next = &mut self.slots[i + 1];
                    next.prefix = Some(prefix.clone());
                    next.approx = CallState::InFlight;
                    next.target = CallState::InFlight;
                    cmds.push(Command::Launch { role: Role::Approx, slot: i + 2, prefix: prefix.clone() });
                    cmds.push(Command::Launch { role: Role::Target, slot: i + 2, prefix });
                }
            }
        }

        let last = self.slots.len() - 1;
        if self.verified == self.slots.len() && matches!(self.slots[last].exec, ExecState::Done(_)) {
            self.phase = Phase::Done(now);
        }
        cmds
    }

    fn advance_sequential(&mut self, now: Millis, cmds: &mut Vec<Command>) {
        if let (CallState::Done(t), ExecState::Idle) = (&self.slots[0].target, &self.correction) {
            if self.stop_on.as_ref() == Some(t) {
                self.stopped = true;
                self.phase = Phase::Done(now);
                return;
            }
            let action = t.clone();
            self.correction = ExecState::Running;
            cmds.push(Command::Execute { slot: 1, kind: ExecKind::Committed, prefix: self.start_state.clone(), action });
        } else if matches!(self.correction, ExecState::Done(_)) {
            self.phase = Phase::Done(now);
        }
    }

    fn stop(&mut self, slot: usize, now: Millis, cmds: &mut Vec<Command>) {
        self.stopped = true;
        self.cancel_after(slot, cmds);
        self.phase = Phase::Done(now);
    }

    /// Cancel in-flight calls for slots after `slot` and abandon optimistic
    /// executions from `slot` on.
    fn cancel_after(&mut self, slot: usize, cmds: &mut Vec<Command>) {
        for (i, s) in self.slots.iter_mut().enumerate() {
            let n = i + 1;
            if n > slot {
                for (role, st) in [(Role::Approx, &mut s.approx), (Role::Target, &mut s.target)] {
                    if *st == CallState::InFlight {
                        *st = CallState::Canceled;
                        cmds.push(Command::Cancel { role, slot: n });
                    }
                }
            }
            if n >= slot && s.exec == ExecState::Running {
                s.exec = ExecState::Abandoned;
                cmds.push(Command::AbandonExec { slot: n, kind: ExecKind::Optimistic });
            }
        }
    }

    /// Outcome of a finished round. Panics if the round is still running.
    pub fn finish(&self) -> RoundOutcome {
        let Phase::Done(end_ms) = self.phase else { panic!("round is not finished") };
        let mut outcomes = Vec::new();
        if self.sequential {
            let CallState::Done(t) = &self.slots[0].target else { unreachable!("sequential round finished without target") };
            let observation = match &self.correction {
                ExecState::Done(o) => o.clone(),
                _ => String::new(),
            };
            outcomes.push(StepOutcome {
                step: self.step_of(1),
                approx_action: None,
                target_action: t.clone(),
                matched: false,
                committed_action: t.clone(),
                observation,
            });
            return RoundOutcome { outcomes, end_ms, matched_count: 0, mismatched: false, stopped: self.stopped };
        }
        let n_committed = self.verified + usize::from(self.mismatch.is_some());
        for (i, s) in self.slots.iter().take(n_committed).enumerate() {
            let (CallState::Done(a), CallState::Done(t)) = (&s.approx, &s.target) else {
                unreachable!("committed slot without both outputs")
            };
            let matched = i < self.verified;
            let exec = if matched { &s.exec } else { &self.correction };
            let observation = match exec {
                // the stop action is never executed, even if a draft run of it finished
                _ if self.stopped && i + 1 == n_committed => String::new(),
                ExecState::Done(o) => o.clone(),
                _ => String::new(),
            };
            outcomes.push(StepOutcome {
                step: self.step_of(i + 1),
                approx_action: Some(a.clone()),
                target_action: t.clone(),
                matched,
                committed_action: t.clone(),
                observation,
            });
        }
        RoundOutcome {
            outcomes,
            end_ms,
            matched_count: self.verified,
            mismatched: self.mismatch.is_some(),
            stopped: self.stopped,
        }
    }
}
