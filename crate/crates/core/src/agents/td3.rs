//! Twin delayed deep deterministic policy gradient.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBatch, ReplayBuffer};
use super::{Agent, Digest, Step, UpdateDiagnostics};
use crate::adam::AdamState;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::mlp::{Activation, MlpParams, MlpVars};
use crate::policy::DeterministicPolicy;
use crate::rng::SeededRng;
use crate::runnorm::InputNormalizer;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub learning_rate: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub update_steps: usize,
    pub gamma: f64,
    pub exploration_noise: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub policy_freq: u64,
    pub warm_start: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub init: InitScheme,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            tau: 5e-3,
            batch_size: 100,
            update_steps: 5,
            gamma: 0.99,
            exploration_noise: 0.1,
            target_noise: 0.2,
            noise_clip: 0.5,
            policy_freq: 2,
            warm_start: 10_000,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            hidden: vec![400, 300],
            init: InitScheme::orthogonal(1.0),
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && (0.0..=1.0).contains(&self.tau) && self.gamma > 0.0) {
            return Err(Error::Config("td3 learning rate and discount must be positive, tau in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.policy_freq == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Config("td3 batch size, policy frequency and capacity must be positive".into()));
        }
        if self.exploration_noise < 0.0 || self.target_noise < 0.0 || self.noise_clip < 0.0 {
            return Err(Error::Config("td3 noise scales must be non-negative".into()));
        }
        Ok(())
    }
}

/// `target ← (1 − τ)·target + τ·source`.
pub fn soft_update(target: &mut MlpParams, source: &MlpParams, tau: f64) -> Result<()> {
    if target.num_params() != source.num_params() || target.layers().len() != source.layers().len() {
        return Err(Error::Contract("soft update between differently shaped networks"));
    }
    for (t, s) in target.tensors_mut().into_iter().zip(source.tensors()) {
        if t.shape() != s.shape() {
            return Err(Error::Contract("soft update between differently shaped networks"));
        }
        for (x, y) in t.data_mut().iter_mut().zip(s.data()) {
            *x = (1.0 - tau) * *x + tau * y;
        }
    }
    Ok(())
}

/// Fills `buffer` with `n` transitions under uniformly random actions,
/// resetting the environment whenever an episode ends.
pub fn warm_start_replay(env: &mut Env, buffer: &mut ReplayBuffer, n: usize, rng: &mut SeededRng) -> Result<()> {
    let spec = env.task().action_spec();
    for _ in 0..n {
        let state = env.observation().to_vec();
        let action = spec.sample_uniform(rng);
        let (reward, done) = env.step(&action)?;
        buffer.push(&state, &action, reward, env.observation(), done)?;
        if done {
            env.reset(rng);
        }
    }
    Ok(())
}

/// `y = r + γ·(1 − done)·min(q1, q2)`.
pub fn clipped_double_q_target(rewards: &[f64], dones: &[f64], q1: &[f64], q2: &[f64], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .zip(q1.iter().zip(q2))
        .map(|((r, d), (a, b))| r + gamma * (1.0 - d) * a.min(*b))
        .collect()
}

/// Row-wise concatenation of two row-major blocks.
pub(crate) fn concat_rows(rows: usize, a: &[f64], wa: usize, b: &[f64], wb: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * (wa + wb));
    for r in 0..rows {
        out.extend_from_slice(&a[r * wa..(r + 1) * wa]);
        out.extend_from_slice(&b[r * wb..(r + 1) * wb]);
    }
    out
}

/// `mean((Q(x) − y)²)`.
pub fn critic_loss(tape: &mut Tape, critic: &MlpVars, inputs: Var, targets: &[f64]) -> Var {
    let rows = tape.shape(inputs).0;
    let q = critic.forward(tape, inputs);
    let y = tape.constant(rows, 1, targets.to_vec());
    let err = tape.sub(q, y);
    let sq = tape.square(err);
    tape.mean(sq)
}

/// `−mean(Q(s, μ(s)))`.
pub fn deterministic_actor_loss(tape: &mut Tape, actor: &MlpVars, critic: &MlpVars, states: Var) -> Var {
    let a = actor.forward(tape, states);
    let x = tape.concat_cols(states, a);
    let q = critic.forward(tape, x);
    let m = tape.mean(q);
    tape.neg(m)
}

pub(crate) fn critic_net(
    obs_dim: usize,
    act_dim: usize,
    hidden: &[usize],
    scheme: &InitScheme,
    rng: &mut SeededRng,
) -> Result<MlpParams> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(obs_dim + act_dim);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    MlpParams::new(&sizes, Activation::Relu, Activation::Linear, scheme, rng)
}

/// Regresses `critic` onto `targets` with one Adam step.
pub(crate) fn fit_critic(critic: &mut MlpParams, opt: &mut AdamState, rows: usize, inputs: &[f64], targets: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = critic.bind(&mut tape);
    let x = tape.constant(rows, critic.input_dim(), inputs.to_vec());
    let loss = critic_loss(&mut tape, &vars, x, targets);
    tape.backward(loss)?;
    critic.zero_grad();
    critic.accumulate_grads(&tape, &vars)?;
    opt.step_mlp(critic)?;
    Ok(tape.scalar(loss))
}

/// Samples a batch and normalizes its states with the current statistics.
pub(crate) fn sample_normalized(
    buffer: &ReplayBuffer,
    normalizer: &InputNormalizer,
    obs_dim: usize,
    rows: usize,
    rng: &mut SeededRng,
) -> Result<ReplayBatch> {
    let mut batch = buffer.sample(rows, rng)?;
    batch.states = normalizer.apply_rows(obs_dim, &batch.states);
    batch.next_states = normalizer.apply_rows(obs_dim, &batch.next_states);
    Ok(batch)
}

/// Losses of one gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Td3Stats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub actor: DeterministicPolicy,
    pub actor_target: MlpParams,
    pub critics: [MlpParams; 2],
    pub critic_targets: [MlpParams; 2],
    actor_opt: AdamState,
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

impl Td3Agent {
    pub fn new(obs_dim: usize, act_dim: usize, config: Td3Config, normalize_inputs: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init_rng = SeededRng::for_component(seed, "td3-init");
        let actor = DeterministicPolicy::new(
            obs_dim,
            act_dim,
            &config.hidden,
            &config.init,
            config.exploration_noise,
            &mut init_rng,
        )?;
        let c1 = critic_net(obs_dim, act_dim, &config.hidden, &config.init, &mut init_rng)?;
        let c2 = critic_net(obs_dim, act_dim, &config.hidden, &config.init, &mut init_rng)?;
        let lr = config.learning_rate;
        Ok(Self {
            actor_target: actor.net.clone(),
            critic_targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actor,
            actor_opt: AdamState::new(lr),
            critic_opts: [AdamState::new(lr), AdamState::new(lr)],
            buffer: ReplayBuffer::new(config.buffer_capacity, obs_dim, act_dim),
            normalizer: InputNormalizer::new(obs_dim, normalize_inputs),
            explore_rng: SeededRng::for_component(seed, "td3-explore"),
            sample_rng: SeededRng::for_component(seed, "td3-sample"),
            noise_rng: SeededRng::for_component(seed, "td3-target-noise"),
            updates: 0,
            obs_dim,
            act_dim,
            config,
        })
    }

    pub fn normalizer(&self) -> &InputNormalizer {
        &self.normalizer
    }

    /// Number of gradient iterations run so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One gradient iteration with update index `step`: both critics always,
    /// the actor and all targets only when `step` is a multiple of the policy
    /// frequency. No-op while the buffer holds fewer than a batch.
    pub fn train_step(&mut self, step: u64) -> Result<Option<Td3Stats>> {
        let rows = self.config.batch_size;
        if self.buffer.len() < rows {
            return Ok(None);
        }
        let (o, a) = (self.obs_dim, self.act_dim);
        let batch = sample_normalized(&self.buffer, &self.normalizer, o, rows, &mut self.sample_rng)?;

        let mut next_actions = self.actor_target.forward_batch(rows, &batch.next_states);
        for v in &mut next_actions {
            let eps = (self.config.target_noise * self.noise_rng.normal())
                .clamp(-self.config.noise_clip, self.config.noise_clip);
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
        let next_inputs = concat_rows(rows, &batch.next_states, o, &next_actions, a);
        let q1 = self.critic_targets[0].forward_batch(rows, &next_inputs);
        let q2 = self.critic_targets[1].forward_batch(rows, &next_inputs);
        let y = clipped_double_q_target(&batch.rewards, &batch.dones, &q1, &q2, self.config.gamma);

        let inputs = concat_rows(rows, &batch.states, o, &batch.actions, a);
        let mut critic_total = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            critic_total += fit_critic(critic, opt, rows, &inputs, &y)?;
        }

        let mut actor_loss = None;
        if step % self.config.policy_freq == 0 {
            let mut tape = Tape::new();
            let actor_vars = self.actor.net.bind(&mut tape);
            let critic_vars = self.critics[0].bind(&mut tape);
            let s = tape.constant(rows, o, batch.states);
            let loss = deterministic_actor_loss(&mut tape, &actor_vars, &critic_vars, s);
            tape.backward(loss)?;
            self.actor.net.zero_grad();
            self.actor.net.accumulate_grads(&tape, &actor_vars)?;
            self.actor_opt.step_mlp(&mut self.actor.net)?;
            actor_loss = Some(tape.scalar(loss));

            let tau = self.config.tau;
            soft_update(&mut self.actor_target, &self.actor.net, tau)?;
            for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
                soft_update(t, c, tau)?;
            }
        }
        Ok(Some(Td3Stats {
            critic_loss: critic_total / 2.0,
            actor_loss,
        }))
    }

    fn learning_started(&self) -> bool {
        self.buffer.len() >= self.config.warm_start.max(self.config.batch_size)
    }
}

impl Agent for Td3Agent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        self.normalizer.observe(observation)?;
        if self.buffer.len() < self.config.warm_start {
            return Ok((0..self.act_dim)
                .map(|_| self.explore_rng.uniform_range(-1.0, 1.0))
                .collect());
        }
        let state = self.normalizer.apply(observation);
        Ok(self.actor.act(&state, &mut self.explore_rng, true))
    }

    fn eval_action(&self, observation: &[f64]) -> Vec<f64> {
        self.actor.net.forward_row(&self.normalizer.apply(observation))
    }

    fn record(&mut self, step: Step<'_>) -> Result<()> {
        self.buffer
            .push(step.observation, step.action, step.reward, step.next_observation, step.done)?;
        if self.learning_started() {
            for _ in 0..self.config.update_steps {
                self.train_step(self.updates)?;
                self.updates += 1;
            }
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critics.iter().all(MlpParams::is_finite)
    }

    fn digest(&self) -> u64 {
        let mut d = Digest::default();
        d.mlp(&self.actor.net);
        d.mlp(&self.actor_target);
        for net in self.critics.iter().chain(&self.critic_targets) {
            d.mlp(net);
        }
        d.adam(&self.actor_opt);
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
