//! Soft actor-critic with a fixed entropy temperature.
//!
//! There are no published SAC hyperparameters for this setting; the defaults
//! reuse the TD3 network sizes and learning rate with temperature 0.2.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::td3::{concat_rows, critic_net, fit_critic, sample_normalized, soft_update};
use super::{Agent, Digest, Step, UpdateDiagnostics};
use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::math;
use crate::mlp::{MlpParams, MlpVars};
use crate::policy::{TanhGaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
use crate::rng::SeededRng;
use crate::runnorm::InputNormalizer;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub learning_rate: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub update_steps: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub warm_start: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub init: InitScheme,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            tau: 5e-3,
            batch_size: 100,
            update_steps: 5,
            gamma: 0.99,
            alpha: 0.2,
            warm_start: 10_000,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            hidden: vec![400, 300],
            init: InitScheme::orthogonal(1.0),
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && (0.0..=1.0).contains(&self.tau) && self.gamma > 0.0 && self.alpha >= 0.0) {
            return Err(Error::Config("sac rates must be positive, tau in [0, 1], alpha non-negative".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Config("sac batch size and capacity must be positive".into()));
        }
        Ok(())
    }
}

/// `y = r + γ·(1 − done)·(min(q1, q2) − α·log π(a'|s'))`.
pub fn soft_q_target(
    rewards: &[f64],
    dones: &[f64],
    q1: &[f64],
    q2: &[f64],
    next_log_probs: &[f64],
    gamma: f64,
    alpha: f64,
) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .zip(q1.iter().zip(q2))
        .zip(next_log_probs)
        .map(|(((r, d), (a, b)), lp)| r + gamma * (1.0 - d) * (a.min(*b) - alpha * lp))
        .collect()
}

/// `mean(α·log π(ã|s) − min(Q1, Q2)(s, ã))` with `ã` the reparameterized
/// sample driven by `eps`.
#[allow(clippy::too_many_arguments)]
pub fn sac_actor_loss(
    tape: &mut Tape,
    policy: &TanhGaussianPolicy,
    policy_vars: &MlpVars,
    critic1: &MlpVars,
    critic2: &MlpVars,
    states: Var,
    eps: &[f64],
    alpha: f64,
) -> Var {
    let (action, log_prob) = policy.rsample(tape, policy_vars, states, eps);
    let x = tape.concat_cols(states, action);
    let q1 = critic1.forward(tape, x);
    let q2 = critic2.forward(tape, x);
    let q = tape.minimum(q1, q2);
    let scaled = tape.scale(log_prob, alpha);
    let diff = tape.sub(scaled, q);
    tape.mean(diff)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub policy: TanhGaussianPolicy,
    pub critics: [MlpParams; 2],
    pub critic_targets: [MlpParams; 2],
    policy_opt: AdamState,
    critic_opts: [AdamState; 2],
    pub buffer: ReplayBuffer,
    normalizer: InputNormalizer,
    explore_rng: SeededRng,
    sample_rng: SeededRng,
    noise_rng: SeededRng,
    updates: u64,
    obs_dim: usize,
    act_dim: usize,
}

impl SacAgent {
    pub fn new(obs_dim: usize, act_dim: usize, config: SacConfig, normalize_inputs: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init_rng = SeededRng::for_component(seed, "sac-init");
        let policy = TanhGaussianPolicy::new(obs_dim, act_dim, &config.hidden, &config.init, &mut init_rng)?;
        let c1 = critic_net(obs_dim, act_dim, &config.hidden, &config.init, &mut init_rng)?;
        let c2 = critic_net(obs_dim, act_dim, &config.hidden, &config.init, &mut init_rng)?;
        let lr = config.learning_rate;
        Ok(Self {
            critic_targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            policy,
            policy_opt: AdamState::new(lr),
            critic_opts: [AdamState::new(lr), AdamState::new(lr)],
            buffer: ReplayBuffer::new(config.buffer_capacity, obs_dim, act_dim),
            normalizer: InputNormalizer::new(obs_dim, normalize_inputs),
            explore_rng: SeededRng::for_component(seed, "sac-explore"),
            sample_rng: SeededRng::for_component(seed, "sac-sample"),
            noise_rng: SeededRng::for_component(seed, "sac-noise"),
            updates: 0,
            obs_dim,
            act_dim,
            config,
        })
    }

    pub fn normalizer(&self) -> &InputNormalizer {
        &self.normalizer
    }

    /// One gradient iteration on both critics, the policy and the targets.
    pub fn train_step(&mut self) -> Result<Option<SacStats>> {
        let rows = self.config.batch_size;
        if self.buffer.len() < rows {
            return Ok(None);
        }
        let (o, a) = (self.obs_dim, self.act_dim);
        let batch = sample_normalized(&self.buffer, &self.normalizer, o, rows, &mut self.sample_rng)?;

        let out = self.policy.net.forward_batch(rows, &batch.next_states);
        let mut next_actions = Vec::with_capacity(rows * a);
        let mut next_lp = Vec::with_capacity(rows);
        let mut pre = vec![0.0; a];
        for row in out.chunks_exact(2 * a) {
            let (mean, raw_ls) = row.split_at(a);
            let log_std: Vec<f64> = raw_ls.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
            for j in 0..a {
                pre[j] = mean[j] + math::exp(log_std[j]) * self.noise_rng.normal();
                next_actions.push(math::tanh(pre[j]));
            }
            next_lp.push(TanhGaussianPolicy::log_prob_pre_squash(mean, &log_std, &pre));
        }
        let next_inputs = concat_rows(rows, &batch.next_states, o, &next_actions, a);
        let q1 = self.critic_targets[0].forward_batch(rows, &next_inputs);
        let q2 = self.critic_targets[1].forward_batch(rows, &next_inputs);
        let y = soft_q_target(
            &batch.rewards,
            &batch.dones,
            &q1,
            &q2,
            &next_lp,
            self.config.gamma,
            self.config.alpha,
        );

        let inputs = concat_rows(rows, &batch.states, o, &batch.actions, a);
        let mut critic_total = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            critic_total += fit_critic(critic, opt, rows, &inputs, &y)?;
        }

        let mut eps = vec![0.0; rows * a];
        self.noise_rng.fill_normal(&mut eps);
        let mut tape = Tape::new();
        let pvars = self.policy.net.bind(&mut tape);
        let c1 = self.critics[0].bind(&mut tape);
        let c2 = self.critics[1].bind(&mut tape);
        let s = tape.constant(rows, o, batch.states);
        let loss = sac_actor_loss(&mut tape, &self.policy, &pvars, &c1, &c2, s, &eps, self.config.alpha);
        tape.backward(loss)?;
        self.policy.net.zero_grad();
        self.policy.net.accumulate_grads(&tape, &pvars)?;
        self.policy_opt.step_mlp(&mut self.policy.net)?;

        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            soft_update(t, c, self.config.tau)?;
        }
        self.updates += 1;
        Ok(Some(SacStats {
            critic_loss: critic_total / 2.0,
            actor_loss: tape.scalar(loss),
        }))
    }
}

impl Agent for SacAgent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        self.normalizer.observe(observation)?;
        if self.buffer.len() < self.config.warm_start {
            return Ok((0..self.act_dim)
                .map(|_| self.explore_rng.uniform_range(-1.0, 1.0))
                .collect());
        }
        let state = self.normalizer.apply(observation);
        Ok(self.policy.sample(&state, &mut self.explore_rng).0)
    }

    fn eval_action(&self, observation: &[f64]) -> Vec<f64> {
        self.policy.mean_action(&self.normalizer.apply(observation))
    }

    fn record(&mut self, step: Step<'_>) -> Result<()> {
        self.buffer
            .push(step.observation, step.action, step.reward, step.next_observation, step.done)?;
        if self.buffer.len() >= self.config.warm_start.max(self.config.batch_size) {
            for _ in 0..self.config.update_steps {
                self.train_step()?;
            }
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.critics.iter().all(MlpParams::is_finite)
    }

    fn digest(&self) -> u64 {
        let mut d = Digest::default();
        d.mlp(&self.policy.net);
        for net in self.critics.iter().chain(&self.critic_targets) {
            d.mlp(net);
        }
        d.adam(&self.policy_opt);
        for opt in &self.critic_opts {
            d.adam(opt);
        }
        self.buffer.digest_into(&mut d);
        d.normalizer(&self.normalizer);
        for rng in [&self.explore_rng, &self.sample_rng, &self.noise_rng] {
            d.rng(rng);
        }
        d.word(self.updates);
        d.finish()
    }

    fn take_mean_kl(&mut self) -> Option<f64> {
        None
    }

    fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    fn drain_diagnostics(&mut self) -> Vec<UpdateDiagnostics> {
        Vec::new()
    }
}
