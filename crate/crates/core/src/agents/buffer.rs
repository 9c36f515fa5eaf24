//! Rollout storage for the on-policy agents and the replay ring buffer for
//! the off-policy ones.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Uniform-sampling ring buffer with row-major flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<f64>,
    cursor: usize,
}

/// A sampled minibatch; `dones` holds 1.0 for terminal transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBatch {
    pub rows: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<f64>,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 1_000_000;

    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], reward: f64, next_state: &[f64], done: bool) -> Result<()> {
        if state.len() != self.obs_dim || next_state.len() != self.obs_dim {
            return Err(Error::dim("replay state", self.obs_dim, state.len()));
        }
        if action.len() != self.act_dim {
            return Err(Error::dim("replay action", self.act_dim, action.len()));
        }
        let done = if done { 1.0 } else { 0.0 };
        if self.len() < self.capacity {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.next_states.extend_from_slice(next_state);
            self.dones.push(done);
        } else {
            let i = self.cursor;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.states[i * o..(i + 1) * o].copy_from_slice(state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(action);
            self.rewards[i] = reward;
            self.next_states[i * o..(i + 1) * o].copy_from_slice(next_state);
            self.dones[i] = done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    pub fn push_transition(&mut self, t: &Transition) -> Result<()> {
        self.push(&t.state, &t.action, t.reward, &t.next_state, t.done)
    }

    pub fn get(&self, i: usize) -> Transition {
        let (o, a) = (self.obs_dim, self.act_dim);
        Transition {
            state: self.states[i * o..(i + 1) * o].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * o..(i + 1) * o].to_vec(),
            done: self.dones[i] != 0.0,
        }
    }

    /// Draws `rows` indices uniformly with replacement.
    pub fn sample_indices(&self, rows: usize, rng: &mut SeededRng) -> Vec<usize> {
        (0..rows).map(|_| rng.below(self.len())).collect()
    }

    pub fn sample(&self, rows: usize, rng: &mut SeededRng) -> Result<ReplayBatch> {
        if self.len() < rows || rows == 0 {
            return Err(Error::Contract("replay buffer holds fewer items than the batch"));
        }
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut batch = ReplayBatch {
            rows,
            states: Vec::with_capacity(rows * o),
            actions: Vec::with_capacity(rows * a),
            rewards: Vec::with_capacity(rows),
            next_states: Vec::with_capacity(rows * o),
            dones: Vec::with_capacity(rows),
        };
        for i in self.sample_indices(rows, rng) {
            batch.states.extend_from_slice(&self.states[i * o..(i + 1) * o]);
            batch.actions.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            batch.rewards.push(self.rewards[i]);
            batch.next_states.extend_from_slice(&self.next_states[i * o..(i + 1) * o]);
            batch.dones.push(self.dones[i]);
        }
        Ok(batch)
    }

    pub(crate) fn digest_into(&self, d: &mut super::Digest) {
        d.word(self.cursor as u64);
        d.floats(&self.states);
        d.floats(&self.actions);
        d.floats(&self.rewards);
        d.floats(&self.next_states);
        d.floats(&self.dones);
    }
}

/// One on-policy batch. States are stored as the policy saw them, i.e.
/// already normalized when input normalization is on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state following the last transition.
    pub last_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, state: &[f64], action: &[f64], log_prob: f64, reward: f64, value: f64, done: bool) {
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn clear(&mut self) {
        let (o, a) = (self.obs_dim, self.act_dim);
        *self = Self::new(o, a);
    }

    /// Gathers the listed rows of states, actions, old log-probs, advantages
    /// and returns.
    pub fn gather(&self, idx: &[usize]) -> Minibatch {
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut mb = Minibatch {
            rows: idx.len(),
            states: Vec::with_capacity(idx.len() * o),
            actions: Vec::with_capacity(idx.len() * a),
            old_log_probs: Vec::with_capacity(idx.len()),
            advantages: Vec::with_capacity(idx.len()),
            returns: Vec::with_capacity(idx.len()),
        };
        for &i in idx {
            mb.states.extend_from_slice(&self.states[i * o..(i + 1) * o]);
            mb.actions.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            mb.old_log_probs.push(self.log_probs[i]);
            mb.advantages.push(self.advantages[i]);
            mb.returns.push(self.returns[i]);
        }
        mb
    }

    pub(crate) fn digest_into(&self, d: &mut super::Digest) {
        d.floats(&self.states);
        d.floats(&self.actions);
        d.floats(&self.log_probs);
        d.floats(&self.rewards);
        d.floats(&self.values);
        d.word(self.dones.iter().filter(|x| **x).count() as u64);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub rows: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}
