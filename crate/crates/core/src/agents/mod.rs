//! PPO, TRPO, TD3 and SAC.
//!
//! Every agent implements [`Agent`], which is all the experiment loop needs:
//! a training action (which may update the input normalizer), a pure
//! evaluation action, and [`Agent::record`] to hand back the transition and
//! let the agent learn from it.

pub mod adaptive;
pub mod buffer;
pub mod gae;
mod onpolicy;
pub mod ppo;
pub mod sac;
pub mod td3;
pub mod trpo;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::Result;
use crate::mlp::MlpParams;
use crate::rng::SeededRng;
use crate::runnorm::InputNormalizer;

pub use adaptive::{
    clip_policy_gradient, kl_cutoff_penalty, kl_estimate, kl_stopping_check, lr_schedule, KlDecision,
    PolicySnapshot,
};
pub use buffer::{Minibatch, ReplayBatch, ReplayBuffer, RolloutBatch, Transition};
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{ppo_policy_loss, PpoAgent, PpoConfig, PpoLoss};
pub use sac::{sac_actor_loss, soft_q_target, SacAgent, SacConfig, SacStats};
pub use td3::{
    clipped_double_q_target, critic_loss, deterministic_actor_loss, soft_update, warm_start_replay, Td3Agent,
    Td3Config, Td3Stats,
};
pub use trpo::{conjugate_gradient, fisher_vector_product, trpo_policy_update, TrpoAgent, TrpoConfig, TrpoStats};

/// One environment step as seen by the learner. Observations are raw.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub observation: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_observation: &'a [f64],
    pub done: bool,
}

/// One row of per-update diagnostics.
///
/// PPO writes one row per epoch, TRPO one per update. `kl_estimate` is the
/// sample estimate `mean(log π_old − log π_new)` over the batch,
/// `kl_analytic` the exact Gaussian divergence `KL(π_old ‖ π_new)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub step: u64,
    pub epoch: usize,
    pub kl_estimate: f64,
    pub kl_analytic: f64,
    pub grad_norm_pre_clip: f64,
    pub learning_rate: f64,
    pub surrogate: f64,
    pub accepted: Option<bool>,
}

pub trait Agent {
    /// Training action for a raw observation.
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>>;

    /// Exploration-free action; never changes the agent.
    fn eval_action(&self, observation: &[f64]) -> Vec<f64>;

    /// Stores the transition that followed the last [`Agent::act`] and runs
    /// whatever updates are due.
    fn record(&mut self, step: Step<'_>) -> Result<()>;

    fn is_finite(&self) -> bool;

    /// Hash of every piece of learner state: parameters, optimizer moments,
    /// buffers and normalizer statistics.
    fn digest(&self) -> u64;

    /// Mean per-update KL estimate since the previous call, if any update ran.
    fn take_mean_kl(&mut self) -> Option<f64>;

    fn learning_rate(&self) -> f64;

    fn drain_diagnostics(&mut self) -> Vec<UpdateDiagnostics>;
}

/// FNV-1a over the bit patterns of a stream of floats and integers.
#[derive(Debug, Clone, Copy)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }
}

impl Digest {
    pub fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn floats(&mut self, values: &[f64]) {
        self.word(values.len() as u64);
        for v in values {
            self.word(v.to_bits());
        }
    }

    pub fn mlp(&mut self, net: &MlpParams) {
        for t in net.tensors() {
            self.floats(t.data());
        }
    }

    pub fn adam(&mut self, opt: &AdamState) {
        self.word(opt.step_count);
        self.word(opt.learning_rate.to_bits());
        let (m, v) = opt.moments();
        for buf in m.iter().chain(v) {
            self.floats(buf);
        }
    }

    pub fn normalizer(&mut self, norm: &InputNormalizer) {
        if let Some(s) = norm.stats() {
            self.word(s.n);
            self.floats(&s.mean);
            self.floats(&s.m2);
        }
    }

    pub fn rng(&mut self, rng: &SeededRng) {
        let mut probe = rng.clone();
        self.word(probe.next_u64());
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub(crate) fn mean_or_none(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.clear();
    Some(m)
}
