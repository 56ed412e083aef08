//! Replay, epsilon-greedy action selection and the temporal-difference update.

use rand::seq::index::sample;
use rand::Rng;

use super::qnet::{Adam, Gradients, QNetwork};
use crate::{Error, Result};

/// One transition; `next == None` marks the end of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Option<Vec<f64>>,
}

/// Fixed-capacity FIFO of experiences.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Experience>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            cursor: 0,
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

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.cursor] = e;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn contains(&self, e: &Experience) -> bool {
        self.items.contains(e)
    }

    /// Up to `n` distinct entries chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform random action with probability `epsilon`, else the greedy one.
pub fn select_action<R: Rng + ?Sized>(features: &[f64], net: &QNetwork, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..net.n_actions());
    }
    argmax(&net.forward(features))
}

/// Bootstrapped target `r + kappa * max_a Q_target(next, a)`, or `r` at episode end.
pub fn td_target(e: &Experience, target: &QNetwork, kappa: f64) -> f64 {
    match &e.next {
        Some(next) => {
            let q = target.forward(next);
            e.reward + kappa * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
        None => e.reward,
    }
}

/// Mean squared TD error over `batch` and its gradient w.r.t. `net`.
pub fn dqn_loss(batch: &[&Experience], net: &QNetwork, target: &QNetwork, kappa: f64) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    let n = batch.len() as f64;
    for e in batch {
        let y = td_target(e, target, kappa);
        let trace = net.trace(&e.state);
        let err = trace.output()[e.action] - y;
        loss += err * err / n;
        let mut g = vec![0.0; net.n_actions()];
        g[e.action] = 2.0 * err / n;
        net.backward(&trace, &g, &mut grads);
    }
    (loss, grads)
}

/// One optimiser step on `net`; returns the loss before the step.
pub fn dqn_update(batch: &[&Experience], net: &mut QNetwork, target: &QNetwork, kappa: f64, opt: &mut Adam) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("dqn_update needs a nonempty batch".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidInput(format!("discount must lie in (0, 1), got {kappa}")));
    }
    let (loss, grads) = dqn_loss(batch, net, target, kappa);
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite loss over a batch of {}", batch.len())));
    }
    opt.apply(net, &grads)?;
    Ok(loss)
}

/// Copies the main weights into the target network.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork) {
    target.clone_from(net);
}

/// Hyperparameters of the value learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub discount: f64,
    pub step_size: f64,
}

/// Main and target networks with their replay memory and optimiser.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub net: QNetwork,
    pub target: QNetwork,
    pub replay: ReplayBuffer,
    opt: Adam,
    params: AgentParams,
    updates: u64,
    syncs: u64,
}

impl DqnAgent {
    pub fn new(net: QNetwork, params: AgentParams) -> Self {
        Self {
            target: net.clone(),
            opt: Adam::new(&net, params.step_size),
            replay: ReplayBuffer::new(params.replay_capacity),
            net,
            params,
            updates: 0,
            syncs: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    /// One update from a replay sample; `None` until the buffer holds a full batch.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.replay.len() < self.params.batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(self.params.batch_size, rng);
        let loss = dqn_update(&batch, &mut self.net, &self.target, self.params.discount, &mut self.opt)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.params.target_sync_interval) {
            sync_target(&self.net, &mut self.target);
            self.syncs += 1;
        }
        Ok(Some(loss))
    }
}
