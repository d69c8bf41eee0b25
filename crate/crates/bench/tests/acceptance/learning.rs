use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specplan_core::engine::{MatchRun, RunTerminal};
use specplan_core::predictor::{expectile_loss, label_runs, lambda_returns, CheckpointSlot, FeatureVector, Hyperparams, ValueModel};
use specplan_core::{Action, PlanState};

use crate::common::expectile::{expectile_oracle, fit_scalar};
use crate::{ensure, Check};

fn random_model(rng: &mut ChaCha8Rng, dimension: usize) -> ValueModel {
    let mut m = ValueModel::new(Hyperparams { dimension, ..Hyperparams::default() });
    for w in &mut m.weights {
        *w = rng.gen_range(-3.0..3.0);
    }
    m.bias = rng.gen_range(-1.0..1.0);
    m
}

fn run_of(len: usize, seed: u64) -> MatchRun {
    let mut s = PlanState::new(format!("task {seed}"));
    let mut states = Vec::new();
    for i in 0..len {
        states.push(s.clone());
        s = s.append(Action::new(&format!("act-{seed}-{i}")).unwrap(), format!("obs {}", i % 4));
    }
    MatchRun { states, terminal: RunTerminal::Mismatch }
}

pub fn numerics() -> Check {
    // gradient of the loss in the prediction against central differences
    let h = 1e-6;
    let mut worst_grad: f64 = 0.0;
    for &u in &[-4.0, -1.5, -0.2, 0.2, 1.5, 4.0] {
        for &tau in &[0.1, 0.3, 0.5, 0.8, 0.95] {
            let y = 3.0;
            let loss = |v: f64| expectile_loss(y - v, tau).0;
            let v = y - u;
            let numeric = (loss(v + h) - loss(v - h)) / (2.0 * h);
            let analytic = expectile_loss(u, tau).1;
            let rel = (numeric - analytic).abs() / analytic.abs();
            ensure!(rel <= 1e-6, "gradient u={u} tau={tau}: relative error {rel:e}");
            worst_grad = worst_grad.max(rel);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut datasets = vec![vec![1.0, 1.0, 4.0]];
    for _ in 0..3 {
        datasets.push((0..rng.gen_range(3..9)).map(|_| rng.gen_range(1..=8) as f64).collect());
    }
    let mut worst_fit: f64 = 0.0;
    for ys in &datasets {
        for &tau in &[0.05, 0.3, 0.5, 0.7, 0.95] {
            let err = (fit_scalar(ys, tau) - expectile_oracle(ys, tau)).abs();
            ensure!(err <= 1e-3, "expectile {ys:?} tau={tau}: off by {err:e}");
            worst_fit = worst_fit.max(err);
        }
    }

    for case in 0..300u64 {
        let run = run_of(rng.gen_range(1..16), case);
        let model = random_model(&mut rng, 256);
        let targets = lambda_returns(&run, &model, 1.0, 1.0);
        let labels: Vec<f64> = label_runs(std::slice::from_ref(&run), false).iter().map(|l| l.label as f64).collect();
        ensure!(targets == labels, "run {case}: targets {targets:?} labels {labels:?}");
    }
    Ok(format!(
        "max gradient rel err {worst_grad:.1e}, max expectile err {worst_fit:.1e}, 300 runs with targets = labels"
    ))
}

/// Readers predict while a writer swaps 2000 versions. Version v has every
/// weight and the bias equal to v, so a prediction identifies its version.
pub fn swap_stress() -> Check {
    const DIM: usize = 4096;
    let model_at = |v: u64| {
        let mut m = ValueModel::new(Hyperparams { dimension: DIM, ..Hyperparams::default() });
        m.weights = vec![v as f64; DIM];
        m.bias = v as f64;
        m.version = v;
        m
    };
    let slot = Arc::new(CheckpointSlot::new(model_at(0)));
    let stop = Arc::new(AtomicBool::new(false));
    let x = FeatureVector { dimension: DIM, entries: (0..DIM as u32).step_by(3).map(|i| (i, 0.25)).collect() };
    let mass: f64 = x.entries.iter().map(|e| e.1).sum::<f64>() + 1.0;
    let start = Arc::new(Barrier::new(5));
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let (slot, stop, x, start) = (Arc::clone(&slot), Arc::clone(&stop), x.clone(), Arc::clone(&start));
            thread::spawn(move || -> Result<u64, String> {
                start.wait();
                let (mut reads, mut last) = (0u64, 0u64);
                loop {
                    let (value, version) = slot.predict(&x);
                    if value != version as f64 * mass {
                        return Err(format!("prediction {value} not from version {version}"));
                    }
                    if version < last {
                        return Err(format!("version went back from {last} to {version}"));
                    }
                    last = version;
                    reads += 1;
                    if stop.load(Ordering::Relaxed) {
                        return Ok(reads);
                    }
                }
            })
        })
        .collect();
    start.wait();
    for v in 1..=2000 {
        slot.swap(Arc::new(model_at(v))).map_err(|e| e.to_string())?;
        if v % 50 == 0 {
            thread::yield_now();
        }
    }
    let stale = slot.swap(Arc::new(model_at(7))).is_err();
    stop.store(true, Ordering::Relaxed);
    let mut reads = 0;
    for r in readers {
        reads += r.join().map_err(|_| "reader panicked".to_string())??;
    }
    ensure!(stale, "stale swap accepted");
    ensure!(slot.version() == 2000, "final version {}", slot.version());
    Ok(format!("{reads} concurrent predictions over 2000 swaps, each from a single version"))
}
