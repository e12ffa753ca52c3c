//! Experience storage. Every record carries the latent the policy sampled,
//! never the action that was sent to the environment.

use rand::Rng as _;

use crate::env::Observation;
use crate::rng::Rng;

/// Off-policy record `(s, z, r, c, s', terminal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub latent: Vec<f64>,
    pub reward: f64,
    /// 1 when the transition violated a constraint, else 0.
    pub cost: f64,
    pub next_obs: Observation,
    /// True when the episode ended for a reason other than the time limit.
    pub terminal: bool,
}

/// Fixed-capacity ring buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
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

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&Transition> {
        assert!(!self.items.is_empty(), "cannot sample an empty buffer");
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// On-policy record `(s, z, log π, V̂, r, c, done)` plus what GAE needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub obs: Observation,
    /// Pre-squash Gaussian draw; `z = tanh(pre_tanh)`.
    pub pre_tanh: Vec<f64>,
    pub latent: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub cost_value: f64,
    pub reward: f64,
    pub cost: f64,
    /// Episode ended after this step, for any reason.
    pub done: bool,
    /// On time-limit endings, `V(s')` and `V_C(s')` to bootstrap from.
    pub truncated_values: Option<(f64, f64)>,
}

/// Per-worker rollout streams, cleared after each training epoch.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    capacity: usize,
    streams: Vec<Vec<RolloutRecord>>,
    /// `V(s)` and `V_C(s)` of each worker's current state at the rollout end.
    pub last_values: Vec<(f64, f64)>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize, workers: usize) -> Self {
        assert!(capacity > 0 && workers > 0, "rollout capacity and workers must be positive");
        RolloutBuffer { capacity, streams: vec![Vec::new(); workers], last_values: vec![(0.0, 0.0); workers] }
    }

    pub fn push(&mut self, worker: usize, r: RolloutRecord) {
        self.streams[worker].push(r);
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    pub fn workers(&self) -> usize {
        self.streams.len()
    }

    pub fn stream(&self, worker: usize) -> &[RolloutRecord] {
        &self.streams[worker]
    }

    pub fn clear(&mut self) {
        self.streams.iter_mut().for_each(Vec::clear);
        self.last_values.iter_mut().for_each(|v| *v = (0.0, 0.0));
    }
}

/// Generalized advantage estimation over one contiguous stream.
///
/// `dones[t]` cuts the recursion after step `t`; `last_value` bootstraps
/// the step after the final one. Returns `(advantages, returns)`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(rewards.len() == values.len() && values.len() == dones.len(), "gae inputs must align");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = last_value;
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let carry = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * carry - values[t];
        acc = delta + gamma * lambda * carry * acc;
        adv[t] = acc;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shift to zero mean and unit standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    xs.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}
