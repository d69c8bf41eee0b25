//! The learned k policy and its trainers.

use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::CheckpointSlot;
use super::features::featurize;
use super::model::{predict_k, Hyperparams, ValueModel};
use super::train::{examples_from_run, train_pass, ReplayBuffer};
use super::PredictorError;
use crate::clock::Millis;
use crate::engine::{Feedback, KChoice, KPolicy, MatchRun, PolicyError};
use crate::state::PlanState;

/// Trainer that runs inside the simulation. A pass occupies
/// `train_latency_ms` of virtual time on a single worker; its checkpoint
/// becomes visible once that time has elapsed.
#[derive(Debug)]
pub struct SimTrainer {
    model: ValueModel,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    hyper: Hyperparams,
    train_latency_ms: Millis,
    busy_until: Millis,
    pending: VecDeque<(Millis, Arc<ValueModel>)>,
}

impl SimTrainer {
    fn new(hyper: Hyperparams, seed: u64, train_latency_ms: Millis) -> Self {
        Self {
            model: ValueModel::new(hyper.clone()),
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
            hyper,
            train_latency_ms,
            busy_until: 0,
            pending: VecDeque::new(),
        }
    }

    fn on_run(&mut self, run: &MatchRun, now: Millis) {
        self.buffer.insert(examples_from_run(run, &self.hyper));
        if self.buffer.len() < self.hyper.batch {
            return;
        }
        self.model = train_pass(&self.model, &self.buffer, &self.hyper, &mut self.rng);
        self.busy_until = self.busy_until.max(now) + self.train_latency_ms;
        self.pending.push_back((self.busy_until, Arc::new(self.model.clone())));
    }

    fn publish(&mut self, now: Millis, slot: &CheckpointSlot) {
        while self.pending.front().is_some_and(|(t, _)| *t <= now) {
            let (_, m) = self.pending.pop_front().expect("non-empty");
            slot.swap(m).expect("trainer versions increase");
        }
    }
}

enum TrainerMsg {
    Run(MatchRun),
    Stop,
}

/// Trainer on its own OS thread. The engine only ever sends runs over an
/// unbounded channel, so it never waits for training.
#[derive(Debug)]
pub struct BackgroundTrainer {
    tx: Sender<TrainerMsg>,
    handle: Option<JoinHandle<(ValueModel, ReplayBuffer)>>,
}

impl std::fmt::Debug for TrainerMsg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainerMsg::Run(r) => write!(f, "Run({} states)", r.len()),
            TrainerMsg::Stop => write!(f, "Stop"),
        }
    }
}

impl BackgroundTrainer {
    /// `extra_delay` is slept after each pass before the swap; it stands in
    /// for a slow learner.
    pub fn spawn(hyper: Hyperparams, seed: u64, slot: Arc<CheckpointSlot>, extra_delay: Duration) -> Self {
        let (tx, rx) = mpsc::channel();
        let handle = std::thread::spawn(move || background_loop(hyper, seed, slot, extra_delay, rx));
        Self { tx, handle: Some(handle) }
    }

    fn send(&self, run: &MatchRun) {
        // a dead trainer only means no further checkpoints
        let _ = self.tx.send(TrainerMsg::Run(run.clone()));
    }

    fn stop(&mut self) -> Option<(ValueModel, ReplayBuffer)> {
        let _ = self.tx.send(TrainerMsg::Stop);
        self.handle.take().and_then(|h| h.join().ok())
    }
}

impl Drop for BackgroundTrainer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn background_loop(
    hyper: Hyperparams,
    seed: u64,
    slot: Arc<CheckpointSlot>,
    extra_delay: Duration,
    rx: Receiver<TrainerMsg>,
) -> (ValueModel, ReplayBuffer) {
    let mut model = ValueModel::new(hyper.clone());
    let mut buffer = ReplayBuffer::new(hyper.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while let Ok(msg) = rx.recv() {
        let (mut stop, mut fresh) = (false, false);
        let mut batch = vec![msg];
        batch.extend(rx.try_iter());
        for m in batch {
            match m {
                TrainerMsg::Run(run) => {
                    buffer.insert(examples_from_run(&run, &hyper));
                    fresh = true;
                }
                TrainerMsg::Stop => stop = true,
            }
        }
        if fresh && buffer.len() >= hyper.batch {
            model = train_pass(&model, &buffer, &hyper, &mut rng);
            if !extra_delay.is_zero() {
                std::thread::sleep(extra_delay);
            }
            let _ = slot.swap(Arc::new(model.clone()));
        }
        if stop {
            break;
        }
    }
    (model, buffer)
}

#[derive(Debug)]
enum Trainer {
    Sim(SimTrainer),
    Background(BackgroundTrainer),
}

/// Picks k from the value model's prediction for the round's start state
/// and learns online from every closed match run.
#[derive(Debug)]
pub struct DynamicPolicy {
    name: String,
    hyper: Hyperparams,
    slot: Arc<CheckpointSlot>,
    trainer: Trainer,
    predictor_latency_ms: Millis,
}

impl DynamicPolicy {
    /// Policy with an in-simulation trainer that takes no virtual time.
    pub fn new(name: impl Into<String>, hyper: Hyperparams, seed: u64) -> Result<Self, PredictorError> {
        hyper.validate()?;
        let slot = Arc::new(CheckpointSlot::new(ValueModel::new(hyper.clone())));
        let trainer = Trainer::Sim(SimTrainer::new(hyper.clone(), seed, 0));
        Ok(Self { name: name.into(), hyper, slot, trainer, predictor_latency_ms: 0 })
    }

    /// Policy whose trainer runs on a background thread.
    pub fn with_background_trainer(
        name: impl Into<String>,
        hyper: Hyperparams,
        seed: u64,
        extra_delay: Duration,
    ) -> Result<Self, PredictorError> {
        hyper.validate()?;
        let slot = Arc::new(CheckpointSlot::new(ValueModel::new(hyper.clone())));
        let trainer = Trainer::Background(BackgroundTrainer::spawn(hyper.clone(), seed, Arc::clone(&slot), extra_delay));
        Ok(Self { name: name.into(), hyper, slot, trainer, predictor_latency_ms: 0 })
    }

    /// Virtual time a training pass takes before its checkpoint is visible.
    pub fn with_train_latency(mut self, ms: Millis) -> Self {
        if let Trainer::Sim(t) = &mut self.trainer {
            t.train_latency_ms = ms;
        }
        self
    }

    pub fn with_predictor_latency(mut self, ms: Millis) -> Self {
        self.predictor_latency_ms = ms;
        self
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn slot(&self) -> &Arc<CheckpointSlot> {
        &self.slot
    }

    /// The model currently used for predictions.
    pub fn model(&self) -> Arc<ValueModel> {
        self.slot.current()
    }

    /// Replay buffer of the in-simulation trainer.
    pub fn buffer(&self) -> Option<&ReplayBuffer> {
        match &self.trainer {
            Trainer::Sim(t) => Some(&t.buffer),
            Trainer::Background(_) => None,
        }
    }

    /// Stop a background trainer and return its final model and buffer.
    pub fn stop_trainer(&mut self) -> Option<(ValueModel, ReplayBuffer)> {
        match &mut self.trainer {
            Trainer::Sim(t) => Some((t.model.clone(), t.buffer.clone())),
            Trainer::Background(b) => b.stop(),
        }
    }

    pub fn predict_value(&self, state: &PlanState) -> (f64, u64) {
        self.slot.predict(&featurize(state, self.hyper.dimension))
    }
}

impl KPolicy for DynamicPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose_k(&mut self, state: &PlanState, now_ms: Millis) -> Result<KChoice, PolicyError> {
        if let Trainer::Sim(t) = &mut self.trainer {
            t.publish(now_ms, &self.slot);
        }
        let m = self.slot.current();
        let v = m.predict(&featurize(state, self.hyper.dimension));
        if !v.is_finite() {
            return Err(PolicyError(format!("{}: non-finite prediction {v}", self.name)));
        }
        let k = predict_k(v, m.is_trained(), &self.hyper);
        Ok(KChoice { k, latency_ms: self.predictor_latency_ms })
    }

    fn observe(&mut self, feedback: Feedback<'_>, now_ms: Millis) {
        if let Feedback::RunClosed(run) = feedback {
            match &mut self.trainer {
                Trainer::Sim(t) => t.on_run(run, now_ms),
                Trainer::Background(b) => b.send(run),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::engine::RunTerminal;

    fn run(len: usize) -> MatchRun {
        let mut s = PlanState::new("p");
        let mut states = Vec::new();
        for i in 0..len {
            states.push(s.clone());
            s = s.append(Action::new(&format!("a{i}")).unwrap(), "o");
        }
        MatchRun { states, terminal: RunTerminal::Mismatch }
    }

    #[test]
    fn warmup_then_trained() {
        let h = Hyperparams { dimension: 256, ..Hyperparams::default() };
        let mut p = DynamicPolicy::new("dyn", h, 1).unwrap();
        let s0 = PlanState::new("p");
        assert_eq!(p.choose_k(&s0, 0).unwrap().k, 1);
        for _ in 0..4 {
            p.observe(Feedback::RunClosed(&run(4)), 0);
        }
        p.choose_k(&s0, 0).unwrap();
        assert!(p.model().version >= 1);
    }

    #[test]
    fn train_latency_delays_publication() {
        let h = Hyperparams { dimension: 256, ..Hyperparams::default() };
        let mut p = DynamicPolicy::new("dyn", h, 1).unwrap().with_train_latency(100);
        for _ in 0..4 {
            p.observe(Feedback::RunClosed(&run(4)), 10);
        }
        p.choose_k(&PlanState::new("p"), 50).unwrap();
        assert_eq!(p.model().version, 0);
        p.choose_k(&PlanState::new("p"), 110).unwrap();
        assert_eq!(p.model().version, 1);
    }

    #[test]
    fn background_trainer_swaps() {
        let h = Hyperparams { dimension: 256, ..Hyperparams::default() };
        let mut p = DynamicPolicy::with_background_trainer("dyn", h, 1, Duration::ZERO).unwrap();
        for _ in 0..4 {
            p.observe(Feedback::RunClosed(&run(4)), 0);
        }
        let (m, b) = p.stop_trainer().unwrap();
        assert!(m.version >= 1);
        assert_eq!(b.len(), 16);
        assert_eq!(p.model().version, m.version);
    }
}
