//! Brute-force reference timeline for the draft-and-verify protocol.

use specplan_core::{CallRecord, CallStatus, Role};

use super::StepSpec;

#[derive(Debug, Default, Clone)]
struct Slot {
    launched: Option<u64>,
    approx_done: bool,
    target_done: bool,
    exec_end: Option<u64>,
    verified: bool,
}

pub struct Enumerated {
    pub total_time: u64,
    pub ledger: Vec<CallRecord>,
}

fn record(role: Role, step: usize, round: u64, start: u64, end: u64, s: &StepSpec, canceled: bool) -> CallRecord {
    let (prompt, gen, lat) = match role {
        Role::Approx => (s.tokens[0], s.tokens[1], s.approx_ms),
        Role::Target => (s.tokens[2], s.tokens[3], s.target_ms),
    };
    let gen = if canceled { gen * (end - start) / lat } else { gen };
    CallRecord {
        role,
        step,
        start_ms: start,
        end_ms: end,
        prompt_tokens: prompt,
        gen_tokens: gen,
        status: if canceled { CallStatus::Canceled } else { CallStatus::Completed },
        round_id: round,
        usage_missing: false,
    }
}

/// Walks virtual time one millisecond at a time. Per tick: completions,
/// then in-order verification, then launches.
pub fn enumerate(specs: &[StepSpec], ks: &[usize], predictor_ms: u64) -> Enumerated {
    let n = specs.len();
    let mut ledger = Vec::new();
    let mut t = 0u64;
    let mut done = 0usize;
    let mut round = 0u64;
    while done < n {
        let k_issued = ks[round as usize % ks.len()];
        let t0 = t;
        if k_issued == 0 {
            let s = &specs[done];
            ledger.push(record(Role::Target, done + 1, round, t0, t0 + s.target_ms, s, false));
            t = t0 + s.target_ms + s.exec_ms;
            done += 1;
            round += 1;
            continue;
        }
        let k = k_issued.min(n - done);
        let k_ready_at = t0 + predictor_ms;
        let spec = |i: usize| &specs[done + i];
        let mut slots = vec![Slot::default(); k];
        slots[0].launched = Some(t0);
        let mut end = None;
        let mut committed_steps = 0;
        let mut tick = t0;
        while end.is_none() {
            // completions
            for (i, sl) in slots.iter_mut().enumerate() {
                let Some(l) = sl.launched else { continue };
                if !sl.approx_done && l + spec(i).approx_ms == tick {
                    sl.approx_done = true;
                    ledger.push(record(Role::Approx, done + i + 1, round, l, tick, spec(i), false));
                    sl.exec_end = Some(tick + spec(i).exec_ms);
                }
                if !sl.target_done && l + spec(i).target_ms == tick {
                    sl.target_done = true;
                    ledger.push(record(Role::Target, done + i + 1, round, l, tick, spec(i), false));
                }
            }
            // verification, strictly in order
            let mut mismatch = None;
            for i in 0..k {
                if slots[i].verified {
                    continue;
                }
                if !(slots[i].approx_done && slots[i].target_done) {
                    break;
                }
                if spec(i).matched {
                    slots[i].verified = true;
                } else {
                    mismatch = Some(i);
                    break;
                }
            }
            if let Some(m) = mismatch {
                for (j, sl) in slots.iter().enumerate().skip(m + 1) {
                    let Some(l) = sl.launched else { continue };
                    if !sl.approx_done {
                        ledger.push(record(Role::Approx, done + j + 1, round, l, tick, spec(j), true));
                    }
                    if !sl.target_done {
                        ledger.push(record(Role::Target, done + j + 1, round, l, tick, spec(j), true));
                    }
                }
                end = Some(tick + spec(m).exec_ms);
                committed_steps = m + 1;
                break;
            }
            if slots.iter().all(|s| s.verified) && slots[k - 1].exec_end.is_some_and(|x| x <= tick) {
                end = Some(tick);
                committed_steps = k;
                break;
            }
            // launches
            for i in 0..k - 1 {
                if slots[i + 1].launched.is_none()
                    && tick >= k_ready_at
                    && slots[i].exec_end.is_some_and(|x| x <= tick)
                {
                    slots[i + 1].launched = Some(tick);
                }
            }
            tick += 1;
        }
        t = end.unwrap();
        done += committed_steps;
        round += 1;
    }
    Enumerated { total_time: t, ledger }
}

pub fn sort_key(r: &CallRecord) -> (u64, usize, u8, u64) {
    (r.round_id, r.step, r.role as u8, r.start_ms)
}
