//! The adaptive-learning techniques for policy-gradient updates: a linear
//! learning-rate schedule, policy-gradient norm clipping, the sample KL
//! estimate, KL-stopping and the KL-cutoff penalty.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::math;
use crate::policy::GaussianPolicy;
use crate::tensor::Tensor;

/// `α₀ · (1 − t / t_total)`.
pub fn lr_schedule(initial: f64, t: u64, t_total: u64) -> Result<f64> {
    if t > t_total || t_total == 0 {
        return Err(Error::Contract("schedule step must lie in [0, t_total]"));
    }
    Ok(initial * (1.0 - t as f64 / t_total as f64))
}

/// Rescales the gradients of `params` so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_policy_gradient(params: &mut [&mut Tensor], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for t in params.iter() {
        if let Some(g) = t.grad() {
            check_finite("policy gradient", g)?;
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = math::sqrt(sq);
    if norm > max_norm {
        let k = max_norm / norm;
        for t in params.iter_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v *= k);
            }
        }
    }
    Ok(norm)
}

/// Frozen copy of the policy that collected a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot(GaussianPolicy);

impl PolicySnapshot {
    pub fn new(policy: &GaussianPolicy) -> Self {
        Self(policy.clone())
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.0
    }
}

/// `mean(log π_old(a|s) − log π_new(a|s))` over the batch. Can be negative.
pub fn kl_estimate(old: &PolicySnapshot, new: &GaussianPolicy, rows: usize, states: &[f64], actions: &[f64]) -> f64 {
    let lp_old = old.policy().log_prob_batch(rows, states, actions);
    let lp_new = new.log_prob_batch(rows, states, actions);
    mean_log_ratio(&lp_old, &lp_new)
}

pub(crate) fn mean_log_ratio(old: &[f64], new: &[f64]) -> f64 {
    old.iter().zip(new).map(|(o, n)| o - n).sum::<f64>() / old.len() as f64
}

/// Penalty added to the minimized loss once the constraint was violated:
/// `α · (D − D_thr)²` when `D > D_thr`, else zero.
///
/// The objective in its maximized form subtracts this term; the loss here is
/// the negated objective, so the term is added.
pub fn kl_cutoff_penalty(kl: f64, threshold: f64, coeff: f64) -> f64 {
    if kl > threshold {
        coeff * (kl - threshold) * (kl - threshold)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlDecision {
    Continue,
    Stop,
}

pub const KL_STOP_MARGIN: f64 = 1.5;

/// Stops optimization on the current batch once `kl > margin · threshold`.
pub fn kl_stopping_check(kl: f64, threshold: f64, margin: f64) -> KlDecision {
    if kl > margin * threshold {
        KlDecision::Stop
    } else {
        KlDecision::Continue
    }
}

pub(crate) fn grad_norm(values: &[f64]) -> f64 {
    math::sqrt(values.iter().map(|v| v * v).sum())
}

pub(crate) fn collect_grads(params: &[&mut Tensor]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in params {
        match t.grad() {
            Some(g) => out.extend_from_slice(g),
            None => out.extend(core::iter::repeat(0.0).take(t.len())),
        }
    }
    out
}
