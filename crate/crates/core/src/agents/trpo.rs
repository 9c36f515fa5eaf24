//! Trust region policy optimization: natural-gradient direction by conjugate
//! gradient on Fisher-vector products, then a backtracking line search that
//! only accepts steps inside the KL trust region.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::adaptive::{grad_norm, mean_log_ratio, PolicySnapshot};
use super::buffer::RolloutBatch;
use super::onpolicy::Collector;
use super::{mean_or_none, Agent, Digest, Step, UpdateDiagnostics};
use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::init::{InitKind, InitScheme};
use crate::linalg::{axpy, dot};
use crate::math;
use crate::mlp::{Activation, MlpParams};
use crate::policy::GaussianPolicy;
use crate::rng::SeededRng;
use crate::runnorm::InputNormalizer;
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrpoConfig {
    pub max_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_rate: f64,
    pub backtracks: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub value_epochs: usize,
    pub value_lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub init: InitScheme,
    pub adv_norm: bool,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            max_kl: 0.01,
            cg_iters: 10,
            cg_damping: 0.1,
            backtrack_rate: 0.8,
            backtracks: 10,
            gamma: 0.99,
            lambda: 0.95,
            value_epochs: 80,
            value_lr: 1e-3,
            batch_size: 5000,
            hidden: vec![64, 64],
            init: InitScheme::new(InitKind::Lecun),
            adv_norm: true,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_kl > 0.0 && self.cg_damping >= 0.0 && self.value_lr > 0.0 && self.gamma > 0.0) {
            return Err(Error::Config("trpo trust region, damping and learning rate must be positive".into()));
        }
        if !(self.backtrack_rate > 0.0 && self.backtrack_rate < 1.0) {
            return Err(Error::Config("trpo backtrack rate must lie in (0, 1)".into()));
        }
        if self.cg_iters == 0 || self.backtracks == 0 || self.batch_size < 2 {
            return Err(Error::Config("trpo iteration counts and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// `F·v + damping·v` for the batch-averaged Fisher information of a
/// diagonal Gaussian policy, with `v` in [`GaussianPolicy::flat`] order.
///
/// `F = Jᵀ M J`, where `J` is the Jacobian of `(mean, log_std)` with respect
/// to the parameters and `M` the Fisher of the Gaussian in those
/// coordinates: `1/σ²` for each mean and 2 for each log standard deviation.
/// `J v` comes from one forward-mode pass and `Jᵀ(·)` from one reverse pass.
pub fn fisher_vector_product(
    policy: &GaussianPolicy,
    rows: usize,
    states: &[f64],
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>> {
    if v.len() != policy.num_params() {
        return Err(Error::dim("fisher-vector direction", policy.num_params(), v.len()));
    }
    let d = policy.act_dim();
    let nm = policy.mean_net.num_params();
    let (_, dmu) = policy.mean_net.jvp_batch(rows, states, &v[..nm]);
    let inv_var: Vec<f64> = policy.log_std.data().iter().map(|l| math::exp(-2.0 * l)).collect();
    let scale = 1.0 / rows as f64;
    let cotangent: Vec<f64> = dmu
        .iter()
        .enumerate()
        .map(|(i, t)| t * inv_var[i % d] * scale)
        .collect();

    let mut tape = Tape::new();
    let vars = policy.mean_net.bind(&mut tape);
    let s = tape.constant(rows, policy.obs_dim(), states.to_vec());
    let out = vars.forward(&mut tape, s);
    tape.backward_with(out, &cotangent)?;
    let mut fv = policy.mean_net.tape_grad_flat(&tape, &vars);
    fv.extend(v[nm..].iter().map(|x| 2.0 * x));
    axpy(damping, v, &mut fv);
    Ok(fv)
}

/// Solves `A x = b` from `x = 0` for symmetric positive definite `A` given as
/// a product closure. Stops after `iters` iterations or once the residual
/// norm falls below 1e-10.
pub fn conjugate_gradient(
    mut product: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    iters: usize,
) -> Result<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if math::sqrt(rr) < 1e-10 {
            break;
        }
        let ap = product(&p)?;
        let pap = dot(&p, &ap);
        let alpha = rr / pap;
        if !alpha.is_finite() {
            return Err(Error::NonFinite {
                context: "conjugate gradient step",
                index: 0,
            });
        }
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let next = dot(&r, &r);
        let beta = next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = next;
    }
    crate::error::check_finite("conjugate gradient solution", &x)?;
    Ok(x)
}

/// Outcome of one policy update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrpoStats {
    pub accepted: bool,
    pub backtracks_used: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl_analytic: f64,
    pub kl_estimate: f64,
    pub grad_norm: f64,
}

/// `mean(exp(log π(a|s) − log π_old(a|s)) · A)`.
fn surrogate(policy: &GaussianPolicy, batch: &RolloutBatch) -> f64 {
    let lp = policy.log_prob_batch(batch.len(), &batch.states, &batch.actions);
    lp.iter()
        .zip(&batch.log_probs)
        .zip(&batch.advantages)
        .map(|((n, o), a)| math::exp(n - o) * a)
        .sum::<f64>()
        / batch.len() as f64
}

/// One TRPO policy step on a batch with advantages filled in. A rejected
/// step leaves `policy` bit-identical.
pub fn trpo_policy_update(policy: &mut GaussianPolicy, batch: &RolloutBatch, config: &TrpoConfig) -> Result<TrpoStats> {
    let n = batch.len();
    let (obs_dim, act_dim) = (policy.obs_dim(), policy.act_dim());
    let old = PolicySnapshot::new(policy);

    let mut tape = Tape::new();
    let vars = policy.bind(&mut tape);
    let s = tape.constant(n, obs_dim, batch.states.clone());
    let a = tape.constant(n, act_dim, batch.actions.clone());
    let lp = vars.log_prob(&mut tape, s, a);
    let lp_old = tape.constant(n, 1, batch.log_probs.clone());
    let adv = tape.constant(n, 1, batch.advantages.clone());
    let log_ratio = tape.sub(lp, lp_old);
    let ratio = tape.exp(log_ratio);
    let weighted = tape.mul(ratio, adv);
    let surr = tape.mean(weighted);
    tape.backward(surr)?;
    let surrogate_before = tape.scalar(surr);
    let mut g = policy.mean_net.tape_grad_flat(&tape, &vars.mean);
    match tape.grad(vars.log_std) {
        Some(gl) => g.extend_from_slice(gl),
        None => g.extend(core::iter::repeat(0.0).take(act_dim)),
    }
    let mut stats = TrpoStats {
        accepted: false,
        backtracks_used: 0,
        surrogate_before,
        surrogate_after: surrogate_before,
        kl_analytic: 0.0,
        kl_estimate: 0.0,
        grad_norm: grad_norm(&g),
    };
    if g.iter().all(|x| *x == 0.0) {
        return Ok(stats);
    }

    let fvp = |v: &[f64]| fisher_vector_product(old.policy(), n, &batch.states, v, config.cg_damping);
    let dir = conjugate_gradient(fvp, &g, config.cg_iters)?;
    let curvature = dot(&dir, &fvp(&dir)?);
    if !(curvature > 0.0) {
        return Ok(stats);
    }
    let step_scale = math::sqrt(2.0 * config.max_kl / curvature);
    let theta0 = policy.flat();
    let mut candidate = theta0.clone();
    let mut frac = 1.0;
    for k in 0..config.backtracks {
        for ((c, t), d) in candidate.iter_mut().zip(&theta0).zip(&dir) {
            *c = t + frac * step_scale * d;
        }
        policy.set_flat(&candidate)?;
        let surr_new = surrogate(policy, batch);
        let kl = old.policy().mean_kl(policy, n, &batch.states);
        if policy.is_finite() && surr_new > surrogate_before && kl <= config.max_kl {
            let lp_new = policy.log_prob_batch(n, &batch.states, &batch.actions);
            stats.accepted = true;
            stats.backtracks_used = k;
            stats.surrogate_after = surr_new;
            stats.kl_analytic = kl;
            stats.kl_estimate = mean_log_ratio(&batch.log_probs, &lp_new);
            return Ok(stats);
        }
        frac *= config.backtrack_rate;
    }
    *policy = old.policy().clone();
    stats.backtracks_used = config.backtracks;
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct TrpoAgent {
    pub config: TrpoConfig,
    pub policy: GaussianPolicy,
    pub value: MlpParams,
    value_opt: AdamState,
    collector: Collector,
    update_kls: Vec<f64>,
    diagnostics: Vec<UpdateDiagnostics>,
}

impl TrpoAgent {
    pub fn new(obs_dim: usize, act_dim: usize, config: TrpoConfig, normalize_inputs: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init_rng = SeededRng::for_component(seed, "trpo-init");
        let policy = GaussianPolicy::new(obs_dim, act_dim, &config.hidden, &config.init, 1.0, &mut init_rng)?;
        let mut sizes = Vec::with_capacity(config.hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let value = MlpParams::new(&sizes, Activation::Tanh, Activation::Linear, &config.init, &mut init_rng)?;
        Ok(Self {
            value_opt: AdamState::new(config.value_lr),
            collector: Collector::new(
                obs_dim,
                act_dim,
                normalize_inputs,
                SeededRng::for_component(seed, "trpo-act"),
            ),
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

    pub fn update_on_batch(&mut self, batch: &RolloutBatch) -> Result<TrpoStats> {
        let stats = trpo_policy_update(&mut self.policy, batch, &self.config)?;
        self.fit_value(batch)?;
        self.update_kls.push(stats.kl_estimate);
        self.diagnostics.push(UpdateDiagnostics {
            step: self.collector.env_steps,
            epoch: 0,
            kl_estimate: stats.kl_estimate,
            kl_analytic: stats.kl_analytic,
            grad_norm_pre_clip: stats.grad_norm,
            learning_rate: self.config.value_lr,
            surrogate: stats.surrogate_after,
            accepted: Some(stats.accepted),
        });
        Ok(stats)
    }

    /// Full-batch regression of the value network onto the returns.
    fn fit_value(&mut self, batch: &RolloutBatch) -> Result<()> {
        let n = batch.len();
        for _ in 0..self.config.value_epochs {
            let mut tape = Tape::new();
            let vars = self.value.bind(&mut tape);
            let s = tape.constant(n, self.policy.obs_dim(), batch.states.clone());
            let v = vars.forward(&mut tape, s);
            let target = tape.constant(n, 1, batch.returns.clone());
            let err = tape.sub(v, target);
            let sq = tape.square(err);
            let loss = tape.mean(sq);
            tape.backward(loss)?;
            self.value.zero_grad();
            self.value.accumulate_grads(&tape, &vars)?;
            self.value_opt.step_mlp(&mut self.value)?;
        }
        Ok(())
    }
}

impl Agent for TrpoAgent {
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
        d.adam(&self.value_opt);
        self.collector.digest_into(&mut d);
        d.finish()
    }

    fn take_mean_kl(&mut self) -> Option<f64> {
        mean_or_none(&mut self.update_kls)
    }

    fn learning_rate(&self) -> f64 {
        self.config.value_lr
    }

    fn drain_diagnostics(&mut self) -> Vec<UpdateDiagnostics> {
        core::mem::take(&mut self.diagnostics)
    }
}
