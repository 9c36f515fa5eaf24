//! Training loop with periodic offline evaluation.
//!
//! Each seed gets a fresh environment and agent. Every `eval_interval`
//! training episodes the agent is evaluated for `eval_episodes` episodes
//! with exploration off; evaluation only reads the agent, so parameters,
//! buffers and normalizer statistics are untouched.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::agents::{
    Agent, PpoAgent, PpoConfig, SacAgent, SacConfig, Step, Td3Agent, Td3Config, TrpoAgent, TrpoConfig,
    UpdateDiagnostics,
};
use crate::env::{Env, Task, EPISODE_LENGTH};
use crate::error::{Error, Result};
use crate::init::{InitKind, InitScheme};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Trpo,
    Td3,
    Sac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Ppo, Algorithm::Trpo, Algorithm::Td3, Algorithm::Sac];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Trpo => "trpo",
            Algorithm::Td3 => "td3",
            Algorithm::Sac => "sac",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: Task,
    pub seeds: Vec<u64>,
    /// Training episodes per seed.
    pub episodes: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub input_normalization: bool,
    /// Overrides the algorithm's default initialization when set.
    pub init: Option<InitKind>,
    pub orthogonal_gain: f64,
    /// Ends a seed early once an evaluation reaches this mean return.
    pub target_return: Option<f64>,
    pub ppo: PpoConfig,
    pub trpo: TrpoConfig,
    pub td3: Td3Config,
    pub sac: SacConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::new(Algorithm::Ppo, Task::CartpoleSwingup)
    }
}

impl ExperimentConfig {
    /// Ten seeds, desk-scale episode count for `env`, evaluation every ten
    /// episodes.
    pub fn new(algorithm: Algorithm, env: Task) -> Self {
        Self {
            algorithm,
            env,
            seeds: (0..10).collect(),
            episodes: Self::desk_episodes(env),
            eval_interval: 10,
            eval_episodes: 10,
            input_normalization: false,
            init: None,
            orthogonal_gain: 1.0,
            target_return: None,
            ppo: PpoConfig::default(),
            trpo: TrpoConfig::default(),
            td3: Td3Config::default(),
            sac: SacConfig::default(),
        }
    }

    pub fn desk_episodes(env: Task) -> usize {
        match env {
            Task::CartpoleBalance | Task::CartpoleSwingup => 300,
            Task::AcrobotSwingup => 600,
        }
    }

    pub fn total_steps(&self) -> u64 {
        (self.episodes * EPISODE_LENGTH) as u64
    }

    /// The initialization the agent will actually use.
    pub fn init_scheme(&self) -> InitScheme {
        let default = match self.algorithm {
            Algorithm::Ppo => self.ppo.init,
            Algorithm::Trpo => self.trpo.init,
            Algorithm::Td3 => self.td3.init,
            Algorithm::Sac => self.sac.init,
        };
        match self.init {
            Some(kind) => InitScheme {
                kind,
                gain: self.orthogonal_gain,
            },
            None => default,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".to_string()));
        }
        if self.episodes == 0 || self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "episodes, eval_interval and eval_episodes must be positive".to_string(),
            ));
        }
        if !(self.orthogonal_gain > 0.0) {
            return Err(Error::Config("orthogonal_gain must be positive".to_string()));
        }
        match self.algorithm {
            Algorithm::Ppo => self.ppo.validate(),
            Algorithm::Trpo => self.trpo.validate(),
            Algorithm::Td3 => self.td3.validate(),
            Algorithm::Sac => self.sac.validate(),
        }
    }
}

/// Builds the configured agent for one seed.
pub fn build_agent(config: &ExperimentConfig, seed: u64) -> Result<Box<dyn Agent>> {
    let obs = config.env.obs_dim();
    let act = config.env.action_spec().dim;
    let norm = config.input_normalization;
    let init = config.init_scheme();
    Ok(match config.algorithm {
        Algorithm::Ppo => {
            let c = PpoConfig {
                init,
                ..config.ppo.clone()
            };
            Box::new(PpoAgent::new(obs, act, c, norm, config.total_steps(), seed)?)
        }
        Algorithm::Trpo => {
            let c = TrpoConfig {
                init,
                ..config.trpo.clone()
            };
            Box::new(TrpoAgent::new(obs, act, c, norm, seed)?)
        }
        Algorithm::Td3 => {
            let c = Td3Config {
                init,
                ..config.td3.clone()
            };
            Box::new(Td3Agent::new(obs, act, c, norm, seed)?)
        }
        Algorithm::Sac => {
            let c = SacConfig {
                init,
                ..config.sac.clone()
            };
            Box::new(SacAgent::new(obs, act, c, norm, seed)?)
        }
    })
}

/// One evaluation point of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub seed: u64,
    pub episode: usize,
    pub steps: u64,
    /// Mean offline return over the evaluation episodes.
    pub mean_return: f64,
    /// Mean per-update KL estimate since the previous evaluation point.
    pub mean_kl: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub episode: usize,
    pub step: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub curve: Vec<CurveRecord>,
    pub diagnostics: Vec<UpdateDiagnostics>,
    pub failure: Option<RunFailure>,
}

impl SeedRun {
    pub fn final_return(&self) -> Option<f64> {
        if self.failure.is_some() {
            return None;
        }
        self.curve.last().map(|r| r.mean_return)
    }

    pub fn best_return(&self) -> Option<f64> {
        self.curve.iter().map(|r| r.mean_return).reduce(f64::max)
    }
}

/// Mean return of `episodes` full episodes under [`Agent::eval_action`].
pub fn evaluate(agent: &dyn Agent, task: Task, episodes: usize, rng: &mut SeededRng) -> Result<f64> {
    let mut env = Env::new(task, rng);
    let mut total = 0.0;
    for e in 0..episodes {
        if e > 0 {
            env.reset(rng);
        }
        loop {
            let action = agent.eval_action(env.observation());
            let (reward, done) = env.step(&action)?;
            total += reward;
            if done {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

/// Trains and evaluates one seed. Numerical failures end the run and are
/// reported in [`SeedRun::failure`]; only an invalid configuration is an
/// error.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    config.validate()?;
    let mut agent = build_agent(config, seed)?;
    let mut env_rng = SeededRng::for_component(seed, "env");
    let mut eval_rng = SeededRng::for_component(seed, "eval");
    let mut env = Env::new(config.env, &mut env_rng);
    let mut run = SeedRun {
        seed,
        curve: Vec::new(),
        diagnostics: Vec::new(),
        failure: None,
    };
    let mut steps: u64 = 0;
    for episode in 1..=config.episodes {
        if episode > 1 {
            env.reset(&mut env_rng);
        }
        if let Err(e) = train_episode(agent.as_mut(), &mut env, &mut steps) {
            run.diagnostics.extend(agent.drain_diagnostics());
            run.failure = Some(RunFailure {
                episode,
                step: steps,
                message: e.to_string(),
            });
            return Ok(run);
        }
        run.diagnostics.extend(agent.drain_diagnostics());
        if episode % config.eval_interval == 0 {
            let mean_return = match evaluate(agent.as_ref(), config.env, config.eval_episodes, &mut eval_rng) {
                Ok(r) => r,
                Err(e) => {
                    run.failure = Some(RunFailure {
                        episode,
                        step: steps,
                        message: e.to_string(),
                    });
                    return Ok(run);
                }
            };
            run.curve.push(CurveRecord {
                seed,
                episode,
                steps,
                mean_return,
                mean_kl: agent.take_mean_kl(),
                learning_rate: agent.learning_rate(),
            });
            if config.target_return.is_some_and(|t| mean_return >= t) {
                break;
            }
        }
    }
    Ok(run)
}

fn train_episode(agent: &mut dyn Agent, env: &mut Env, steps: &mut u64) -> Result<()> {
    loop {
        let observation = env.observation().to_vec();
        let action = agent.act(&observation)?;
        let (reward, done) = env.step(&action)?;
        agent.record(Step {
            observation: &observation,
            action: &action,
            reward,
            next_observation: env.observation(),
            done,
        })?;
        *steps += 1;
        if !agent.is_finite() {
            return Err(Error::NonFinite {
                context: "agent parameters",
                index: 0,
            });
        }
        if done {
            return Ok(());
        }
    }
}

/// Runs every seed in order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    config.validate()?;
    config.seeds.iter().map(|&s| run_seed(config, s)).collect()
}
