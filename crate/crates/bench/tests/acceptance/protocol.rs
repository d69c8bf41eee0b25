use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specplan_core::agents::{sequential_baseline, SimBackend, TaskTrace};
use specplan_core::baselines::{sft_policy, BoPolicy, FixedK, Sequential};
use specplan_core::engine::{run_task, KPolicy, RunTerminal, TaskContext, TaskResult};
use specplan_core::metrics::{build_report, peak_concurrency, RunTotals, TaskRecord};
use specplan_core::predictor::{label_runs, DynamicPolicy, Hyperparams};
use specplan_core::PriceTable;

use crate::common::timeline::{enumerate, sort_key};
use crate::common::{build_trace, step, ScriptedK, StepSpec};
use crate::{ensure, Check};

fn run_with(trace: &TaskTrace, policy: &mut dyn KPolicy) -> TaskResult {
    let mut backend = SimBackend::new(trace);
    run_task(&mut backend, policy, &TaskContext::new(&trace.task_id)).expect("simulated run")
}

pub fn labels() -> Check {
    // steps 1 and 2 match, 3 mismatches, 4 and 5 match to the end
    let specs = vec![step(true, 1, 4, 1), step(true, 1, 4, 1), step(false, 1, 4, 1), step(true, 1, 4, 1), step(true, 1, 4, 1)];
    let trace = build_trace("fig", &specs);
    let res = run_with(&trace, &mut ScriptedK::new(vec![3, 2], 0));
    let pairs: Vec<(usize, usize)> =
        label_runs(&res.runs, false).iter().map(|l| (l.state.step_index() + 1, l.label)).collect();
    ensure!(pairs == [(1, 3), (2, 2), (3, 1)], "pairs {pairs:?}");
    ensure!(res.runs.first().map(|r| r.terminal) == Some(RunTerminal::Mismatch), "first run {:?}", res.runs.first());
    ensure!(res.runs.get(1).is_some_and(|r| r.is_censored()), "tail run should be censored");
    Ok(format!("pairs {pairs:?}"))
}

fn all_match(n: usize, seed: u64) -> TaskTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<StepSpec> =
        (0..n).map(|_| step(true, rng.gen_range(1..20), rng.gen_range(30..90), rng.gen_range(1..10))).collect();
    build_trace(&format!("am{seed}"), &specs)
}

pub fn concurrency() -> Check {
    let prices = PriceTable::default();
    let traces: Vec<TaskTrace> = (0..20).map(|i| all_match(10 + i % 7, i as u64)).collect();
    let records: Vec<TaskRecord> = traces
        .iter()
        .map(|t| {
            let r = run_with(t, &mut FixedK::new(2).unwrap());
            TaskRecord {
                task_id: t.task_id.clone(),
                total_time_ms: r.total_time_ms,
                ledger: r.ledger,
                rounds: r.rounds,
                baseline: sequential_baseline(t, &prices),
            }
        })
        .collect();
    let totals = RunTotals::of(&records, &prices);
    let report = build_report("fixed-k2", &records, &totals, &prices).map_err(|e| e.to_string())?;
    let (mc, kb) = (format!("{:.2}", report.mean_concurrency), format!("{:.2}", report.mean_k));
    ensure!(report.mean_concurrency == 3.0 && report.mean_k == 2.0, "MC {mc} K {kb}, want 3.00 2.00");

    for k in 1..=6 {
        let mut attained = false;
        for t in &traces {
            let peak = peak_concurrency(&run_with(t, &mut FixedK::new(k).unwrap()).ledger);
            ensure!(peak <= k + 1, "k={k}: peak {peak}");
            attained |= peak == k + 1;
        }
        ensure!(attained, "k={k}: bound never attained");
    }
    Ok(format!("MC {mc}, K {kb}; peak = k+1 for k = 1..6"))
}

pub fn oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ledger_records = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=6);
        let specs: Vec<StepSpec> = (0..n)
            .map(|_| StepSpec {
                matched: rng.gen_bool(0.6),
                approx_ms: rng.gen_range(1..=15),
                target_ms: rng.gen_range(1..=30),
                exec_ms: rng.gen_range(1..=10),
                tokens: [rng.gen_range(0..500), rng.gen_range(0..80), rng.gen_range(0..900), rng.gen_range(0..300)],
            })
            .collect();
        let ks: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..=4)).collect();
        let predictor_ms = rng.gen_range(0..=3);
        let trace = build_trace("o", &specs);
        let got = run_with(&trace, &mut ScriptedK::new(ks.clone(), predictor_ms));
        let want = enumerate(&specs, &ks, predictor_ms);
        ensure!(got.total_time_ms == want.total_time, "case {case}: time {} vs {}", got.total_time_ms, want.total_time);
        let mut a = got.ledger;
        let mut b = want.ledger;
        a.sort_by_key(sort_key);
        b.sort_by_key(sort_key);
        ensure!(a == b, "case {case}: ledgers differ\nengine {a:?}\noracle {b:?}");
        ledger_records += a.len();
    }
    Ok(format!("200 traces, {ledger_records} ledger records identical"))
}

fn random_policy(rng: &mut ChaCha8Rng, seed: u64) -> (Box<dyn KPolicy>, &'static str) {
    let hyper = Hyperparams { batch: 4, dimension: 256, ..Hyperparams::default() };
    match rng.gen_range(0..6) {
        0 => (Box::new(Sequential), "sequential"),
        1 => (Box::new(FixedK::new(rng.gen_range(1..=6)).unwrap()), "fixed"),
        2 => {
            let tau = *[0.5, 0.8, 0.9, 0.95, 0.99].choose(rng).unwrap();
            let h = Hyperparams { tau, beta: rng.gen_range(-1..=2), ..hyper };
            let p = DynamicPolicy::new("dsp", h, seed)
                .unwrap()
                .with_predictor_latency(rng.gen_range(0..5))
                .with_train_latency(rng.gen_range(0..50));
            (Box::new(p), "dynamic")
        }
        3 => (Box::new(sft_policy("sft", hyper, seed).unwrap()), "sft"),
        4 => (Box::new(BoPolicy::new("bo", 6, 0.1, seed).unwrap()), "bo"),
        _ => {
            let ks: Vec<usize> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..=7)).collect();
            (Box::new(ScriptedK::new(ks, rng.gen_range(0..5))), "scripted")
        }
    }
}

pub fn losslessness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut kinds = std::collections::BTreeMap::<&str, usize>::new();
    let triples = 1200;
    for case in 0..triples {
        let n = rng.gen_range(1..=12);
        let p = rng.gen_range(0.0..=1.0);
        let specs: Vec<StepSpec> = (0..n)
            .map(|_| step(rng.gen_bool(p), rng.gen_range(1..=40), rng.gen_range(1..=80), rng.gen_range(1..=20)))
            .collect();
        let trace = build_trace(&format!("l{case}"), &specs);
        let seed = rng.gen();
        let (mut policy, kind) = random_policy(&mut rng, seed);
        *kinds.entry(kind).or_default() += 1;
        let got = run_with(&trace, policy.as_mut());
        let seq = run_with(&trace, &mut Sequential);
        ensure!(got.actions == seq.actions, "case {case} ({kind}): actions differ");
        ensure!(
            got.final_state.render_history() == seq.final_state.render_history(),
            "case {case} ({kind}): observations differ"
        );
    }
    Ok(format!("{triples} triples identical to target-only output ({kinds:?})"))
}
