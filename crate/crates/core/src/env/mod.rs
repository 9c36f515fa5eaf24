//! Continuous-control tasks with rewards in `[0, 1]`, fixed-length episodes
//! and actions in `[-1, 1]`.
//!
//! Angles are reported as `(cos, sin)` pairs followed by raw velocities.
//! Physics is integrated with RK4 at [`DT`], one action held per step.

mod acrobot;
mod cartpole;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub use acrobot::{AcrobotParams, ACROBOT};
pub use cartpole::{CartpoleParams, CARTPOLE};

pub const EPISODE_LENGTH: usize = 1000;
pub const DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "cartpole-balance")]
    CartpoleBalance,
    #[serde(rename = "cartpole-swingup")]
    CartpoleSwingup,
    #[serde(rename = "acrobot-swingup")]
    AcrobotSwingup,
}

impl Task {
    pub const ALL: [Task; 3] = [
        Task::CartpoleBalance,
        Task::CartpoleSwingup,
        Task::AcrobotSwingup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CartpoleBalance => "cartpole-balance",
            Task::CartpoleSwingup => "cartpole-swingup",
            Task::AcrobotSwingup => "acrobot-swingup",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            Task::CartpoleBalance | Task::CartpoleSwingup => 5,
            Task::AcrobotSwingup => 6,
        }
    }

    pub fn action_spec(self) -> ActionSpec {
        ActionSpec::symmetric(1, 1.0)
    }

    pub fn reset(self, rng: &mut SeededRng) -> EnvState {
        let physics = match self {
            Task::CartpoleBalance => cartpole::initial_state(0.0, rng),
            Task::CartpoleSwingup => cartpole::initial_state(core::f64::consts::PI, rng),
            Task::AcrobotSwingup => acrobot::initial_state(rng),
        };
        EnvState {
            observation: self.observe(&physics),
            physics: physics.to_vec(),
            step_index: 0,
        }
    }

    /// Advances one control step. Actions outside the box are clipped.
    pub fn step(self, state: &EnvState, action: &[f64]) -> Result<(EnvState, f64, bool)> {
        let mut next = state.clone();
        let (reward, done) = self.step_in_place(&mut next, action)?;
        Ok((next, reward, done))
    }

    pub fn step_in_place(self, state: &mut EnvState, action: &[f64]) -> Result<(f64, bool)> {
        let spec = self.action_spec();
        if action.len() != spec.dim {
            return Err(Error::dim("action", spec.dim, action.len()));
        }
        if let Some(index) = action.iter().position(|a| a.is_nan()) {
            return Err(Error::NonFinite {
                context: "action",
                index,
            });
        }
        if state.step_index >= EPISODE_LENGTH {
            return Err(Error::Contract("episode already finished; reset first"));
        }
        let u = action[0].clamp(spec.low[0], spec.high[0]);
        let x: [f64; 4] = state.physics[..4].try_into().expect("4-dof physics state");
        let next = match self {
            Task::CartpoleBalance | Task::CartpoleSwingup => rk4(x, DT, |s| CARTPOLE.derivative(s, u)),
            Task::AcrobotSwingup => rk4(x, DT, |s| ACROBOT.derivative(s, u)),
        };
        state.physics.copy_from_slice(&next);
        state.observation = self.observe(&next);
        state.step_index += 1;
        let reward = match self {
            Task::CartpoleBalance | Task::CartpoleSwingup => cartpole::reward(&next),
            Task::AcrobotSwingup => acrobot::reward(&next),
        };
        Ok((reward, state.step_index == EPISODE_LENGTH))
    }

    fn observe(self, s: &[f64; 4]) -> Vec<f64> {
        use crate::math::{cos, sin};
        match self {
            // x, cos θ, sin θ, ẋ, θ̇
            Task::CartpoleBalance | Task::CartpoleSwingup => {
                vec![s[0], cos(s[1]), sin(s[1]), s[2], s[3]]
            }
            // cos q1, sin q1, cos q2, sin q2, q̇1, q̇2
            Task::AcrobotSwingup => vec![cos(s[0]), sin(s[0]), cos(s[1]), sin(s[1]), s[2], s[3]],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown environment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub observation: Vec<f64>,
    /// Generalized coordinates followed by their velocities.
    pub physics: Vec<f64>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub dim: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionSpec {
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        Self {
            dim,
            low: vec![-limit; dim],
            high: vec![limit; dim],
        }
    }

    pub fn clip(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.low).zip(&self.high) {
            *a = a.clamp(*lo, *hi);
        }
    }

    pub fn sample_uniform(&self, rng: &mut SeededRng) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(lo, hi)| rng.uniform_range(*lo, *hi))
            .collect()
    }
}

/// A task instance with its current state.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    task: Task,
    state: EnvState,
}

impl Env {
    pub fn new(task: Task, rng: &mut SeededRng) -> Self {
        Self {
            task,
            state: task.reset(rng),
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn reset(&mut self, rng: &mut SeededRng) -> &[f64] {
        self.state = self.task.reset(rng);
        &self.state.observation
    }

    pub fn observation(&self) -> &[f64] {
        &self.state.observation
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn step(&mut self, action: &[f64]) -> Result<(f64, bool)> {
        self.task.step_in_place(&mut self.state, action)
    }
}

pub(crate) fn rk4(x: [f64; 4], h: f64, f: impl Fn(&[f64; 4]) -> [f64; 4]) -> [f64; 4] {
    let add = |a: &[f64; 4], b: &[f64; 4], k: f64| -> [f64; 4] {
        [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]]
    };
    let k1 = f(&x);
    let k2 = f(&add(&x, &k1, h / 2.0));
    let k3 = f(&add(&x, &k2, h / 2.0));
    let k4 = f(&add(&x, &k3, h));
    let mut out = x;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}
