//! Per-task bookkeeping shared by the simulated and live drivers: committed
//! state, round log, match runs and policy feedback.

use super::machine::RoundOutcome;
use super::runs::{MatchRun, RoundResolution, RunTracker};
use super::{Feedback, KPolicy, RoundLog, RoundTerminal, StepOutcome, TaskResult};
use crate::clock::Millis;
use crate::ledger::CallRecord;
use crate::state::PlanState;

pub struct TaskRecorder {
    task_id: String,
    /// Offset added to task-local times when talking to the policy.
    time_base_ms: Millis,
    state: PlanState,
    outcomes: Vec<StepOutcome>,
    states: Vec<PlanState>,
    runs: Vec<MatchRun>,
    rounds: Vec<RoundLog>,
    tracker: RunTracker,
    next_round: u64,
}

impl TaskRecorder {
    pub fn new(task_id: &str, task_prompt: &str, first_round_id: u64, time_base_ms: Millis) -> Self {
        Self {
            task_id: task_id.to_string(),
            time_base_ms,
            state: PlanState::new(task_prompt),
            outcomes: Vec::new(),
            states: Vec::new(),
            runs: Vec::new(),
            rounds: Vec::new(),
            tracker: RunTracker::new(),
            next_round: first_round_id,
        }
    }

    pub fn state(&self) -> &PlanState {
        &self.state
    }

    /// Id the next round will get.
    pub fn round_id(&self) -> u64 {
        self.next_round
    }

    pub fn policy_time(&self, now: Millis) -> Millis {
        self.time_base_ms + now
    }

    /// Register a round about to start with issued `k`. A sequential round
    /// closes the open run: its step carries no speculation label.
    pub fn begin_round(&mut self, policy: &mut dyn KPolicy, k: usize, now: Millis) {
        if k == 0 {
            let closed = self.tracker.close_open();
            self.feed(closed, policy, now);
        } else {
            self.tracker.round_started(self.next_round, k);
        }
    }

    /// Commit a finished round. `task_over` decides between `TaskEnd` and
    /// `Exhausted` for rounds where everything matched.
    pub fn end_round(
        &mut self,
        policy: &mut dyn KPolicy,
        k: usize,
        k_effective: usize,
        start_ms: Millis,
        out: RoundOutcome,
        task_over: impl FnOnce(&PlanState) -> bool,
    ) {
        let log_index = self.rounds.len();
        self.rounds.push(RoundLog {
            round_id: self.next_round,
            task_id: self.task_id.clone(),
            start_step: self.state.step_index() + 1,
            k,
            k_effective,
            matched_count: out.matched_count,
            terminal: RoundTerminal::Sequential,
            start_ms,
            end_ms: out.end_ms,
            optimal_k: None,
        });
        for o in &out.outcomes {
            let from = self.state.clone();
            self.state = self.state.append(o.committed_action.clone(), o.observation.clone());
            if o.approx_action.is_some() {
                let closed = self.tracker.push(from.clone(), o);
                self.feed(closed, policy, out.end_ms);
            }
            self.states.push(from);
        }
        self.rounds[log_index].terminal = if k == 0 {
            RoundTerminal::Sequential
        } else if out.mismatched {
            RoundTerminal::Mismatch
        } else if out.stopped || task_over(&self.state) {
            RoundTerminal::TaskEnd
        } else {
            RoundTerminal::Exhausted
        };
        self.outcomes.extend(out.outcomes);
        self.next_round += 1;
    }

    pub fn finish(mut self, policy: &mut dyn KPolicy, now: Millis, ledger: Vec<CallRecord>) -> TaskResult {
        let closed = self.tracker.close_open();
        self.feed(closed, policy, now);
        TaskResult {
            task_id: self.task_id,
            actions: self.outcomes.iter().map(|o| o.committed_action.clone()).collect(),
            outcomes: self.outcomes,
            states: self.states,
            final_state: self.state,
            total_time_ms: now,
            ledger,
            runs: self.runs,
            rounds: self.rounds,
        }
    }

    fn feed(&mut self, closed: Option<(MatchRun, Vec<RoundResolution>)>, policy: &mut dyn KPolicy, at: Millis) {
        let Some((run, resolved)) = closed else { return };
        let at = self.time_base_ms + at;
        if !run.is_empty() {
            policy.observe(Feedback::RunClosed(&run), at);
        }
        for r in resolved {
            if let Some(log) = self.rounds.iter_mut().find(|l| l.round_id == r.round_id) {
                log.optimal_k = Some(r.optimal_k);
            }
            policy.observe(Feedback::RoundResolved(r), at);
        }
        if !run.is_empty() {
            self.runs.push(run);
        }
    }
}
