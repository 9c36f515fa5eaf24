//! Proximal policy optimization with the clipped surrogate and five
//! independently switchable adaptive-learning techniques.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::adaptive::{
    clip_policy_gradient, collect_grads, grad_norm, kl_stopping_check, lr_schedule, mean_log_ratio, KlDecision,
    PolicySnapshot, KL_STOP_MARGIN,
};
use super::buffer::{Minibatch, RolloutBatch};
use super::onpolicy::Collector;
use super::{mean_or_none, Agent, Digest, Step, UpdateDiagnostics};
use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::init::{InitKind, InitScheme};
use crate::mlp::{Activation, MlpParams};
use crate::policy::{GaussianPolicy, GaussianVars};
use crate::rng::SeededRng;
use crate::runnorm::InputNormalizer;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_range: f64,
    pub max_kl: f64,
    pub entropy_coeff: f64,
    pub cutoff_coeff: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub value_coeff: f64,
    pub weight_decay: f64,
    pub kl_stop_margin: f64,
    pub hidden: Vec<usize>,
    pub init: InitScheme,
    pub lrs: bool,
    pub adv_norm: bool,
    pub grad_clip: bool,
    pub kl_stop: bool,
    pub kl_cutoff: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_range: 0.2,
            max_kl: 0.01,
            entropy_coeff: 0.1,
            cutoff_coeff: 100.0,
            max_grad_norm: 0.5,
            learning_rate: 3e-4,
            batch_size: 2048,
            minibatch_size: 64,
            epochs: 10,
            gamma: 0.99,
            lambda: 0.95,
            value_coeff: 0.5,
            weight_decay: 0.0,
            kl_stop_margin: KL_STOP_MARGIN,
            hidden: alloc::vec![64, 64],
            init: InitScheme::new(InitKind::Lecun),
            lrs: false,
            adv_norm: false,
            grad_clip: false,
            kl_stop: false,
            kl_cutoff: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.clip_range,
            self.max_kl,
            self.max_grad_norm,
            self.learning_rate,
            self.gamma,
            self.kl_stop_margin,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("ppo rates and thresholds must be positive".into()));
        }
        if self.batch_size < 2 || self.minibatch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("ppo batch sizes and epochs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) || self.entropy_coeff < 0.0 || self.cutoff_coeff < 0.0 {
            return Err(Error::Config("ppo lambda must lie in [0, 1] and coefficients be non-negative".into()));
        }
        Ok(())
    }
}

/// Tape handles of one policy loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PpoLoss {
    /// Clipped surrogate plus entropy bonus plus (when active) the cutoff
    /// penalty; the quantity that is differentiated.
    pub total: Var,
    /// `−mean(min(r·A, clip(r, 1−ε, 1+ε)·A))`.
    pub clip: Var,
    /// Minibatch sample KL estimate.
    pub kl: Var,
}

/// Builds the minimized policy loss for one minibatch.
///
/// `cutoff_active` is set when the previous epoch's full-batch KL estimate
/// exceeded `max_kl`; the penalty then uses this minibatch's estimate.
pub fn ppo_policy_loss(
    tape: &mut Tape,
    vars: &GaussianVars,
    mb: &Minibatch,
    obs_dim: usize,
    act_dim: usize,
    config: &PpoConfig,
    cutoff_active: bool,
) -> PpoLoss {
    let rows = mb.rows;
    let s = tape.constant(rows, obs_dim, mb.states.clone());
    let a = tape.constant(rows, act_dim, mb.actions.clone());
    let lp = vars.log_prob(tape, s, a);
    let old = tape.constant(rows, 1, mb.old_log_probs.clone());
    let adv = tape.constant(rows, 1, mb.advantages.clone());

    let log_ratio = tape.sub(lp, old);
    let ratio = tape.exp(log_ratio);
    let unclipped = tape.mul(ratio, adv);
    let bounded = tape.clamp(ratio, 1.0 - config.clip_range, 1.0 + config.clip_range);
    let clipped = tape.mul(bounded, adv);
    let surrogate = tape.minimum(unclipped, clipped);
    let objective = tape.mean(surrogate);
    let clip = tape.neg(objective);

    let entropy = vars.entropy(tape);
    let bonus = tape.scale(entropy, -config.entropy_coeff);
    let mut total = tape.add(clip, bonus);

    let neg_log_ratio = tape.neg(log_ratio);
    let kl = tape.mean(neg_log_ratio);
    if cutoff_active {
        let excess = tape.add_scalar(kl, -config.max_kl);
        let violation = tape.clamp(excess, 0.0, f64::INFINITY);
        let sq = tape.square(violation);
        let penalty = tape.scale(sq, config.cutoff_coeff);
        total = tape.add(total, penalty);
    }
    PpoLoss { total, clip, kl }
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub policy: GaussianPolicy,
    pub value: MlpParams,
    policy_opt: AdamState,
    value_opt: AdamState,
    collector: Collector,
    shuffle_rng: SeededRng,
    total_steps: u64,
    learning_rate: f64,
    update_kls: Vec<f64>,
    diagnostics: Vec<UpdateDiagnostics>,
}

impl PpoAgent {
    /// `total_steps` is the run length in environment steps, used by the
    /// learning-rate schedule.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        config: PpoConfig,
        normalize_inputs: bool,
        total_steps: u64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut init_rng = SeededRng::for_component(seed, "ppo-init");
        let policy = GaussianPolicy::new(obs_dim, act_dim, &config.hidden, &config.init, 1.0, &mut init_rng)?;
        let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let value = MlpParams::new(&sizes, Activation::Tanh, Activation::Linear, &config.init, &mut init_rng)?;
        let lr = config.learning_rate;
        Ok(Self {
            policy_opt: AdamState::new(lr).with_weight_decay(config.weight_decay),
            value_opt: AdamState::new(lr).with_weight_decay(config.weight_decay),
            collector: Collector::new(
                obs_dim,
                act_dim,
                normalize_inputs,
                SeededRng::for_component(seed, "ppo-act"),
            ),
            shuffle_rng: SeededRng::for_component(seed, "ppo-shuffle"),
            total_steps: total_steps.max(1),
            learning_rate: lr,
            update_kls: Vec::new(),
            diagnostics: Vec::new(),
            config,
            policy,
            value,
        })
    }

    pub fn normalizer(&self) -> &InputNormalizer {
        &self.collector.normalizer
    }

    pub fn env_steps(&self) -> u64 {
        self.collector.env_steps
    }

    /// Runs the epoch loop on a batch whose advantages and returns are
    /// already filled in. Returns the full-batch KL estimate after the last
    /// epoch that ran.
    pub fn update_on_batch(&mut self, batch: &RolloutBatch) -> Result<f64> {
        let n = batch.len();
        let lr = if self.config.lrs {
            lr_schedule(self.config.learning_rate, self.collector.env_steps.min(self.total_steps), self.total_steps)?
        } else {
            self.config.learning_rate
        };
        self.learning_rate = lr;
        self.policy_opt.learning_rate = lr;
        self.value_opt.learning_rate = lr;

        let snapshot = PolicySnapshot::new(&self.policy);
        let mut order: Vec<usize> = (0..n).collect();
        let mut cutoff_active = false;
        let mut last_kl = 0.0;
        for epoch in 0..self.config.epochs {
            for i in (1..n).rev() {
                let j = self.shuffle_rng.below(i + 1);
                order.swap(i, j);
            }
            let (mut surrogate, mut norm, mut count) = (0.0, 0.0, 0.0);
            for chunk in order.chunks(self.config.minibatch_size) {
                let mb = batch.gather(chunk);
                let (loss, pre_norm) = self.policy_step(&mb, cutoff_active)?;
                self.value_step(&mb)?;
                surrogate += loss;
                norm += pre_norm;
                count += 1.0;
            }
            let new_lp = self.policy.log_prob_batch(n, &batch.states, &batch.actions);
            let kl = mean_log_ratio(&batch.log_probs, &new_lp);
            let analytic = snapshot.policy().mean_kl(&self.policy, n, &batch.states);
            self.diagnostics.push(UpdateDiagnostics {
                step: self.collector.env_steps,
                epoch,
                kl_estimate: kl,
                kl_analytic: analytic,
                grad_norm_pre_clip: norm / count,
                learning_rate: lr,
                surrogate: surrogate / count,
                accepted: None,
            });
            last_kl = kl;
            cutoff_active = self.config.kl_cutoff && kl > self.config.max_kl;
            if self.config.kl_stop
                && kl_stopping_check(kl, self.config.max_kl, self.config.kl_stop_margin) == KlDecision::Stop
            {
                break;
            }
        }
        self.update_kls.push(last_kl);
        Ok(last_kl)
    }

    /// One gradient step on the policy; returns `(clip loss, pre-clip norm)`.
    fn policy_step(&mut self, mb: &Minibatch, cutoff_active: bool) -> Result<(f64, f64)> {
        let (obs_dim, act_dim) = (self.policy.obs_dim(), self.policy.act_dim());
        let mut tape = Tape::new();
        let vars = self.policy.bind(&mut tape);
        let loss = ppo_policy_loss(&mut tape, &vars, mb, obs_dim, act_dim, &self.config, cutoff_active);
        tape.backward(loss.total)?;
        self.policy.zero_grad();
        self.policy.accumulate_grads(&tape, &vars)?;
        let mut params = self.policy.tensors_mut();
        let pre = if self.config.grad_clip {
            clip_policy_gradient(&mut params, self.config.max_grad_norm)?
        } else {
            grad_norm(&collect_grads(&params))
        };
        self.policy_opt.step(&mut params)?;
        Ok((tape.scalar(loss.clip), pre))
    }

    fn value_step(&mut self, mb: &Minibatch) -> Result<()> {
        let mut tape = Tape::new();
        let vars = self.value.bind(&mut tape);
        let s = tape.constant(mb.rows, self.policy.obs_dim(), mb.states.clone());
        let v = vars.forward(&mut tape, s);
        let target = tape.constant(mb.rows, 1, mb.returns.clone());
        let err = tape.sub(v, target);
        let sq = tape.square(err);
        let mse = tape.mean(sq);
        let loss = tape.scale(mse, self.config.value_coeff);
        tape.backward(loss)?;
        self.value.zero_grad();
        self.value.accumulate_grads(&tape, &vars)?;
        self.value_opt.step_mlp(&mut self.value)
    }
}

impl Agent for PpoAgent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        self.collector.act(&self.policy, &self.value, observation)
    }

    fn eval_action(&self, observation: &[f64]) -> Vec<f64> {
        self.policy.mean(&self.collector.normalizer.apply(observation))
    }

    fn record(&mut self, step: Step<'_>) -> Result<()> {
        let c = &self.config;
        if let Some(batch) = self
            .collector
            .record(step, &self.value, c.batch_size, c.gamma, c.lambda, c.adv_norm)?
        {
            self.update_on_batch(&batch)?;
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.value.is_finite()
    }

    fn digest(&self) -> u64 {
        let mut d = Digest::default();
        d.mlp(&self.policy.mean_net);
        d.floats(self.policy.log_std.data());
        d.mlp(&self.value);
        d.adam(&self.policy_opt);
        d.adam(&self.value_opt);
        self.collector.digest_into(&mut d);
        d.rng(&self.shuffle_rng);
        d.finish()
    }

    fn take_mean_kl(&mut self) -> Option<f64> {
        mean_or_none(&mut self.update_kls)
    }

    fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    fn drain_diagnostics(&mut self) -> Vec<UpdateDiagnostics> {
        core::mem::take(&mut self.diagnostics)
    }
}
