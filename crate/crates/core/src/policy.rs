//! Policy parameterizations.
//!
//! * [`GaussianPolicy`]: unbounded diagonal Gaussian with a state-independent
//!   log standard deviation (PPO, TRPO). The environment clips its actions.
//! * [`TanhGaussianPolicy`]: state-dependent Gaussian squashed by `tanh` (SAC).
//! * [`DeterministicPolicy`]: `tanh` output plus clipped Gaussian exploration
//!   noise (TD3).

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::math::{self, LN_2PI};
use crate::mlp::{Activation, MlpParams, MlpVars};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Stabilizer inside `log(1 - tanh(u)^2 + eps)`.
pub const TANH_EPS: f64 = 1e-6;

fn sizes(obs_dim: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(obs_dim);
    s.extend_from_slice(hidden);
    s.push(out);
    s
}

fn diag_gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) * math::exp(-ls);
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_net: MlpParams,
    pub log_std: Tensor,
}

/// Tape handles of a bound [`GaussianPolicy`].
#[derive(Debug, Clone)]
pub struct GaussianVars {
    pub mean: MlpVars,
    pub log_std: Var,
}

impl GaussianVars {
    /// Per-row log density, `rows x 1`.
    pub fn log_prob(&self, tape: &mut Tape, states: Var, actions: Var) -> Var {
        let mean = self.mean.forward(tape, states);
        let diff = tape.sub(actions, mean);
        let neg2 = tape.scale(self.log_std, -2.0);
        let inv_var = tape.exp(neg2);
        let sq = tape.square(diff);
        let q = tape.mul(sq, inv_var);
        let half_q = tape.scale(q, -0.5);
        let centered = tape.sub(half_q, self.log_std);
        let per_dim = tape.add_scalar(centered, -0.5 * LN_2PI);
        tape.sum_cols(per_dim)
    }

    /// Entropy of the action distribution (identical for every state).
    pub fn entropy(&self, tape: &mut Tape) -> Var {
        let per_dim = tape.add_scalar(self.log_std, 0.5 * (1.0 + LN_2PI));
        tape.sum(per_dim)
    }
}

impl GaussianPolicy {
    /// Tanh hidden layers, linear output; `log_std = ln(action_limit)`.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        scheme: &InitScheme,
        action_limit: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if action_limit <= 0.0 {
            return Err(Error::Contract("action limit must be positive"));
        }
        let mean_net = MlpParams::new(
            &sizes(obs_dim, hidden, act_dim),
            Activation::Tanh,
            Activation::Linear,
            scheme,
            rng,
        )?;
        let log_std = Tensor::from_vec(vec![math::ln(action_limit); act_dim]).with_grad();
        Ok(Self { mean_net, log_std })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.mean_net.forward_row(state)
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.data().iter().map(|&l| math::exp(l)).collect()
    }

    pub fn sample(&self, state: &[f64], rng: &mut SeededRng) -> (Vec<f64>, f64) {
        let mean = self.mean(state);
        let action: Vec<f64> = mean
            .iter()
            .zip(self.log_std.data())
            .map(|(m, ls)| m + math::exp(*ls) * rng.normal())
            .collect();
        let lp = diag_gaussian_log_prob(&action, &mean, self.log_std.data());
        (action, lp)
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        diag_gaussian_log_prob(action, &self.mean(state), self.log_std.data())
    }

    pub fn log_prob_batch(&self, rows: usize, states: &[f64], actions: &[f64]) -> Vec<f64> {
        let d = self.act_dim();
        let means = self.mean_net.forward_batch(rows, states);
        means
            .chunks_exact(d)
            .zip(actions.chunks_exact(d))
            .map(|(m, a)| diag_gaussian_log_prob(a, m, self.log_std.data()))
            .collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> GaussianVars {
        GaussianVars {
            mean: self.mean_net.bind(tape),
            log_std: tape.leaf(&self.log_std),
        }
    }

    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &GaussianVars) -> Result<()> {
        self.mean_net.accumulate_grads(tape, &vars.mean)?;
        if let Some(g) = tape.grad(vars.log_std) {
            self.log_std.accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.mean_net.num_params() + self.log_std.len()
    }

    /// Mean-network parameters followed by the log standard deviations.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.mean_net.flat();
        v.extend_from_slice(self.log_std.data());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("policy parameters", self.num_params(), flat.len()));
        }
        let n = self.mean_net.num_params();
        self.mean_net.set_flat(&flat[..n])?;
        self.log_std.data_mut().copy_from_slice(&flat[n..]);
        Ok(())
    }

    pub fn flat_grad(&self) -> Vec<f64> {
        let mut v = self.mean_net.flat_grad();
        match self.log_std.grad() {
            Some(g) => v.extend_from_slice(g),
            None => v.extend(core::iter::repeat(0.0).take(self.log_std.len())),
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.mean_net.tensors_mut();
        t.push(&mut self.log_std);
        t
    }

    pub fn zero_grad(&mut self) {
        self.mean_net.zero_grad();
        self.log_std.zero_grad();
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net.is_finite() && self.log_std.is_finite()
    }

    /// Batch mean of the analytic `KL(self || other)` over `rows` states.
    pub fn mean_kl(&self, other: &GaussianPolicy, rows: usize, states: &[f64]) -> f64 {
        let d = self.act_dim();
        let mu_p = self.mean_net.forward_batch(rows, states);
        let mu_q = other.mean_net.forward_batch(rows, states);
        let ls_p = self.log_std.data();
        let ls_q = other.log_std.data();
        let mut total = 0.0;
        for (mp, mq) in mu_p.chunks_exact(d).zip(mu_q.chunks_exact(d)) {
            for j in 0..d {
                let var_p = math::exp(2.0 * ls_p[j]);
                let var_q = math::exp(2.0 * ls_q[j]);
                let dm = mp[j] - mq[j];
                total += ls_q[j] - ls_p[j] + (var_p + dm * dm) / (2.0 * var_q) - 0.5;
            }
        }
        total / rows as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhGaussianPolicy {
    /// Outputs `[mean | log_std]`, both heads initialized by the same scheme.
    pub net: MlpParams,
}

impl TanhGaussianPolicy {
    /// ReLU hidden layers, linear output of width `2 * act_dim`.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        scheme: &InitScheme,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let net = MlpParams::new(
            &sizes(obs_dim, hidden, 2 * act_dim),
            Activation::Relu,
            Activation::Linear,
            scheme,
            rng,
        )?;
        Ok(Self { net })
    }

    pub fn act_dim(&self) -> usize {
        self.net.output_dim() / 2
    }

    /// `(mean, clamped log_std)` of the pre-squash Gaussian.
    pub fn distribution(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let out = self.net.forward_row(state);
        let d = self.act_dim();
        let log_std = out[d..]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        (out[..d].to_vec(), log_std)
    }

    /// Log density of the squashed action `tanh(pre_action)`.
    pub fn log_prob_pre_squash(mean: &[f64], log_std: &[f64], pre_action: &[f64]) -> f64 {
        let base = diag_gaussian_log_prob(pre_action, mean, log_std);
        let correction: f64 = pre_action
            .iter()
            .map(|&u| {
                let t = math::tanh(u);
                math::ln(1.0 - t * t + TANH_EPS)
            })
            .sum();
        base - correction
    }

    pub fn sample(&self, state: &[f64], rng: &mut SeededRng) -> (Vec<f64>, f64) {
        let (mean, log_std) = self.distribution(state);
        let pre: Vec<f64> = mean
            .iter()
            .zip(&log_std)
            .map(|(m, ls)| m + math::exp(*ls) * rng.normal())
            .collect();
        let lp = Self::log_prob_pre_squash(&mean, &log_std, &pre);
        (pre.iter().map(|&u| math::tanh(u)).collect(), lp)
    }

    /// `tanh(mean)`, used for evaluation.
    pub fn mean_action(&self, state: &[f64]) -> Vec<f64> {
        let (mean, _) = self.distribution(state);
        mean.into_iter().map(math::tanh).collect()
    }

    /// Reparameterized sample on the tape for a batch of states, with the
    /// standard-normal noise `eps` (`rows x act_dim`) supplied by the caller.
    /// Returns `(actions, log_probs)` with shapes `rows x act_dim`, `rows x 1`.
    pub fn rsample(&self, tape: &mut Tape, vars: &MlpVars, states: Var, eps: &[f64]) -> (Var, Var) {
        let d = self.act_dim();
        let rows = tape.shape(states).0;
        assert_eq!(eps.len(), rows * d, "rsample noise shape");
        let out = vars.forward(tape, states);
        let mean = tape.slice_cols(out, 0, d);
        let raw_ls = tape.slice_cols(out, d, d);
        let log_std = tape.clamp(raw_ls, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(log_std);
        let eps_v = tape.constant(rows, d, eps.to_vec());
        let noise = tape.mul(std, eps_v);
        let pre = tape.add(mean, noise);
        let action = tape.tanh(pre);
        // log N(pre; mean, std) = -eps^2/2 - log_std - ln(2π)/2
        let half_eps_sq: Vec<f64> = eps.iter().map(|e| -0.5 * e * e - 0.5 * LN_2PI).collect();
        let base_const = tape.constant(rows, d, half_eps_sq);
        let base = tape.sub(base_const, log_std);
        let a_sq = tape.square(action);
        let one_minus = tape.scale(a_sq, -1.0);
        let inner = tape.add_scalar(one_minus, 1.0 + TANH_EPS);
        let corr = tape.ln(inner);
        let per_dim = tape.sub(base, corr);
        let lp = tape.sum_cols(per_dim);
        (action, lp)
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub net: MlpParams,
    pub exploration_std: f64,
}

impl DeterministicPolicy {
    /// ReLU hidden layers with a `tanh` output in `[-1, 1]`.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        scheme: &InitScheme,
        exploration_std: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let net = MlpParams::new(
            &sizes(obs_dim, hidden, act_dim),
            Activation::Relu,
            Activation::Tanh,
            scheme,
            rng,
        )?;
        Ok(Self {
            net,
            exploration_std,
        })
    }

    pub fn act(&self, state: &[f64], rng: &mut SeededRng, explore: bool) -> Vec<f64> {
        let mut a = self.net.forward_row(state);
        if explore {
            for v in &mut a {
                *v = (*v + self.exploration_std * rng.normal()).clamp(-1.0, 1.0);
            }
        }
        a
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Gaussian,
    TanhGaussian,
    Deterministic,
}

impl PolicyKind {
    /// Hidden widths of the default network for each parameterization.
    pub fn default_hidden(self) -> Vec<usize> {
        match self {
            PolicyKind::Gaussian => vec![64, 64],
            PolicyKind::TanhGaussian | PolicyKind::Deterministic => vec![400, 300],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub kind: PolicyKind,
    pub scheme: InitScheme,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub n_states: usize,
    pub n_inits: usize,
    pub action_limit: f64,
    pub exploration_std: f64,
}

impl ProbeConfig {
    pub fn new(kind: PolicyKind, scheme: InitScheme, obs_dim: usize) -> Self {
        Self {
            kind,
            scheme,
            obs_dim,
            act_dim: 1,
            hidden: kind.default_hidden(),
            n_states: 5000,
            n_inits: 100,
            action_limit: 1.0,
            exploration_std: 0.1,
        }
    }
}

/// Normalized histogram on `[low, high]`; values outside fall in the edge bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn from_samples(low: f64, high: f64, bins: usize, samples: &[f64]) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (high - low) / bins as f64;
        for &x in samples {
            let i = math::floor((x - low) / width);
            let i = if i < 0.0 { 0 } else { (i as usize).min(bins - 1) };
            counts[i] += 1;
        }
        let scale = 1.0 / (samples.len() as f64 * width);
        Self {
            low,
            high,
            density: counts.into_iter().map(|c| c as f64 * scale).collect(),
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.high - self.low) / self.density.len() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.density.len())
            .map(|i| self.low + (i as f64 + 0.5) * w)
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    /// Probability mass in bins whose centers lie in `[a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let w = self.bin_width();
        self.centers()
            .iter()
            .zip(&self.density)
            .filter(|(c, _)| **c >= a && **c <= b)
            .map(|(_, d)| d * w)
            .sum()
    }
}

pub const PROBE_BINS: usize = 200;
pub const PROBE_RANGE: (f64, f64) = (-3.0, 3.0);

/// Pooled distribution of the first action chosen by freshly initialized
/// policies on standard-normal states.
pub fn probe_initial_action_density(config: &ProbeConfig, rng: &mut SeededRng) -> Result<Histogram> {
    if config.n_states == 0 || config.n_inits == 0 {
        return Err(Error::Contract("probe needs at least one state and one initialization"));
    }
    let mut state_rng = rng.split("probe-states");
    let mut init_rng = rng.split("probe-init");
    let mut action_rng = rng.split("probe-actions");
    let rows = config.n_states;
    let mut states = vec![0.0; rows * config.obs_dim];
    state_rng.fill_normal(&mut states);
    let d = config.act_dim;
    let mut actions = Vec::with_capacity(rows * d * config.n_inits);
    for _ in 0..config.n_inits {
        match config.kind {
            PolicyKind::Gaussian => {
                let p = GaussianPolicy::new(
                    config.obs_dim,
                    d,
                    &config.hidden,
                    &config.scheme,
                    config.action_limit,
                    &mut init_rng,
                )?;
                let means = p.mean_net.forward_batch(rows, &states);
                let std = p.std();
                for m in means.chunks_exact(d) {
                    for j in 0..d {
                        actions.push(m[j] + std[j] * action_rng.normal());
                    }
                }
            }
            PolicyKind::TanhGaussian => {
                let p = TanhGaussianPolicy::new(config.obs_dim, d, &config.hidden, &config.scheme, &mut init_rng)?;
                let out = p.net.forward_batch(rows, &states);
                for o in out.chunks_exact(2 * d) {
                    for j in 0..d {
                        let ls = o[d + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
                        actions.push(math::tanh(o[j] + math::exp(ls) * action_rng.normal()));
                    }
                }
            }
            PolicyKind::Deterministic => {
                let p = DeterministicPolicy::new(
                    config.obs_dim,
                    d,
                    &config.hidden,
                    &config.scheme,
                    config.exploration_std,
                    &mut init_rng,
                )?;
                let out = p.net.forward_batch(rows, &states);
                for a in out {
                    actions.push((a + p.exploration_std * action_rng.normal()).clamp(-1.0, 1.0));
                }
            }
        }
    }
    Ok(Histogram::from_samples(PROBE_RANGE.0, PROBE_RANGE.1, PROBE_BINS, &actions))
}
