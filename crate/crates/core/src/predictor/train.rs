//! Replay buffer and the expectile-TD(λ) training pass.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::features::{featurize, FeatureVector};
use super::labels::lambda_returns_from_values;
use super::model::{Hyperparams, ValueModel};
use crate::engine::MatchRun;

/// Features of every state of one run, shared by its examples.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFeatures {
    pub states: Vec<FeatureVector>,
    pub censored: bool,
}

impl RunFeatures {
    pub fn from_run(run: &MatchRun, dimension: usize) -> Self {
        Self { states: run.states.iter().map(|s| featurize(s, dimension)).collect(), censored: run.is_censored() }
    }
}

/// A state and the rest of its run, so its target can be recomputed with
/// the latest weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub run: Arc<RunFeatures>,
    pub position: usize,
}

impl TrainingExample {
    pub fn features(&self) -> &FeatureVector {
        &self.run.states[self.position]
    }

    pub fn monte_carlo_label(&self) -> usize {
        self.run.states.len() - self.position
    }

    /// λ-return target under the given model.
    pub fn target(&self, model: &ValueModel, gamma: f64, lambda: f64) -> f64 {
        let values: Vec<f64> = self.run.states[self.position..].iter().map(|x| model.predict(x)).collect();
        lambda_returns_from_values(&values, gamma, lambda)[0]
    }
}

/// One example per state of each eligible run.
pub fn examples_from_run(run: &MatchRun, hyper: &Hyperparams) -> Vec<TrainingExample> {
    if run.is_empty() || (run.is_censored() && !hyper.include_censored) {
        return Vec::new();
    }
    let rf = Arc::new(RunFeatures::from_run(run, hyper.dimension));
    (0..rf.states.len()).map(|position| TrainingExample { run: Arc::clone(&rf), position }).collect()
}

/// FIFO buffer: the oldest examples are evicted beyond capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<TrainingExample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity.min(4096)) }
    }

    pub fn insert(&mut self, examples: impl IntoIterator<Item = TrainingExample>) {
        for e in examples {
            if self.items.len() == self.capacity {
                self.items.pop_front();
            }
            self.items.push_back(e);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingExample> {
        self.items.iter()
    }

    /// Minibatches for one epoch: a seeded shuffle cut into chunks.
    pub fn epoch_batches(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.items.len()).collect();
        idx.shuffle(rng);
        idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
    }

    pub fn get(&self, i: usize) -> &TrainingExample {
        &self.items[i]
    }

    /// JSONL dump, one example per line.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            position: usize,
            run_length: usize,
            censored: bool,
            label: usize,
            features: &'a [(u32, f64)],
        }
        for e in &self.items {
            let line = Line {
                position: e.position,
                run_length: e.run.states.len(),
                censored: e.run.censored,
                label: e.monte_carlo_label(),
                features: &e.features().entries,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Epochs of minibatch SGD over the buffer. Targets are recomputed from the
/// current weights before every minibatch. Returns the model with its
/// version incremented.
pub fn train_pass(model: &ValueModel, buffer: &ReplayBuffer, hyper: &Hyperparams, rng: &mut ChaCha8Rng) -> ValueModel {
    let mut next = model.clone();
    for _ in 0..hyper.epochs {
        for batch in buffer.epoch_batches(hyper.batch, rng) {
            let targets: Vec<(&FeatureVector, f64)> = batch
                .iter()
                .map(|&i| {
                    let e = buffer.get(i);
                    (e.features(), e.target(&next, hyper.gamma, hyper.lambda))
                })
                .collect();
            next.sgd_step(&targets, hyper.tau, hyper.lr);
        }
    }
    next.version += 1;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::engine::RunTerminal;
    use crate::state::PlanState;
    use rand::SeedableRng;

    fn run(len: usize, terminal: RunTerminal) -> MatchRun {
        let mut s = PlanState::new("p");
        let mut states = Vec::new();
        for i in 0..len {
            states.push(s.clone());
            s = s.append(Action::new(&format!("a{i}")).unwrap(), "o");
        }
        MatchRun { states, terminal }
    }

    fn tiny() -> Hyperparams {
        Hyperparams { dimension: 64, ..Hyperparams::default() }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2500);
        let ex = examples_from_run(&run(1, RunTerminal::Mismatch), &tiny());
        for _ in 0..2500 {
            b.insert(ex.clone());
        }
        let marker = examples_from_run(&run(2, RunTerminal::Mismatch), &tiny());
        b.insert(marker[..1].to_vec());
        assert_eq!(b.len(), 2500);
        assert_eq!(b.iter().last().unwrap().run.states.len(), 2);
        let mut small = ReplayBuffer::new(10);
        small.insert(examples_from_run(&run(3, RunTerminal::Mismatch), &tiny()));
        assert_eq!(small.len(), 3);
    }

    #[test]
    fn censored_runs_skipped_by_default() {
        assert!(examples_from_run(&run(2, RunTerminal::TaskEnd), &tiny()).is_empty());
        let h = Hyperparams { include_censored: true, ..tiny() };
        let ex = examples_from_run(&run(2, RunTerminal::TaskEnd), &h);
        assert_eq!(ex.iter().map(|e| e.monte_carlo_label()).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn seeded_batches_repeat() {
        let mut b = ReplayBuffer::new(100);
        for _ in 0..10 {
            b.insert(examples_from_run(&run(4, RunTerminal::Mismatch), &tiny()));
        }
        let a = b.epoch_batches(16, &mut ChaCha8Rng::seed_from_u64(3));
        let c = b.epoch_batches(16, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, c);
        assert_eq!(a.len(), 3);
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn pass_bumps_version_and_learns() {
        let h = Hyperparams { lambda: 1.0, epochs: 50, ..tiny() };
        let mut b = ReplayBuffer::new(100);
        b.insert(examples_from_run(&run(3, RunTerminal::Mismatch), &h));
        let m0 = ValueModel::new(h.clone());
        let m1 = train_pass(&m0, &b, &h, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m1.version, 1);
        let first = b.get(0);
        assert!(m1.predict(first.features()) > m0.predict(first.features()));
    }
}
