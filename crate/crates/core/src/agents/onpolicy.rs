//! Rollout collection shared by PPO and TRPO.

use alloc::vec::Vec;

use super::buffer::RolloutBatch;
use super::gae::{compute_gae, normalize_advantages};
use super::{Digest, Step};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::policy::GaussianPolicy;
use crate::rng::SeededRng;
use crate::runnorm::InputNormalizer;

#[derive(Debug, Clone)]
struct Pending {
    state: Vec<f64>,
    log_prob: f64,
    value: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Collector {
    pub normalizer: InputNormalizer,
    rollout: RolloutBatch,
    pending: Option<Pending>,
    rng: SeededRng,
    pub env_steps: u64,
}

impl Collector {
    pub fn new(obs_dim: usize, act_dim: usize, normalize_inputs: bool, rng: SeededRng) -> Self {
        Self {
            normalizer: InputNormalizer::new(obs_dim, normalize_inputs),
            rollout: RolloutBatch::new(obs_dim, act_dim),
            pending: None,
            rng,
            env_steps: 0,
        }
    }

    /// Updates the normalizer with `observation` and samples an action from
    /// the normalized state.
    pub fn act(&mut self, policy: &GaussianPolicy, value: &MlpParams, observation: &[f64]) -> Result<Vec<f64>> {
        self.normalizer.observe(observation)?;
        let state = self.normalizer.apply(observation);
        let (action, log_prob) = policy.sample(&state, &mut self.rng);
        let value = value.forward_row(&state)[0];
        self.pending = Some(Pending {
            state,
            log_prob,
            value,
        });
        Ok(action)
    }

    /// Stores the step; once `batch_size` transitions are held, returns the
    /// batch with advantages (standardized if `adv_norm`) and returns filled.
    pub fn record(
        &mut self,
        step: Step<'_>,
        value: &MlpParams,
        batch_size: usize,
        gamma: f64,
        lambda: f64,
        adv_norm: bool,
    ) -> Result<Option<RolloutBatch>> {
        let p = self
            .pending
            .take()
            .ok_or(Error::Contract("record called without a preceding act"))?;
        self.rollout
            .push(&p.state, step.action, p.log_prob, step.reward, p.value, step.done);
        self.env_steps += 1;
        if self.rollout.len() < batch_size {
            return Ok(None);
        }
        let last_value = if step.done {
            0.0
        } else {
            value.forward_row(&self.normalizer.apply(step.next_observation))[0]
        };
        let (o, a) = (self.rollout.obs_dim, self.rollout.act_dim);
        let mut batch = core::mem::replace(&mut self.rollout, RolloutBatch::new(o, a));
        batch.last_value = last_value;
        let (adv, returns) = compute_gae(&batch.rewards, &batch.values, &batch.dones, last_value, gamma, lambda)?;
        batch.advantages = if adv_norm { normalize_advantages(&adv)? } else { adv };
        batch.returns = returns;
        Ok(Some(batch))
    }

    pub fn digest_into(&self, d: &mut Digest) {
        d.normalizer(&self.normalizer);
        self.rollout.digest_into(d);
        d.rng(&self.rng);
        d.word(self.env_steps);
    }
}
