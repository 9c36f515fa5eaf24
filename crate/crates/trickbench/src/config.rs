//! Experiment config files.
//!
//! A config is TOML with one `[experiment]` section and one section per
//! algorithm:
//!
//! ```toml
//! [experiment]
//! algorithm = "ppo"              # ppo | trpo | td3 | sac
//! env = "cartpole-swingup"       # cartpole-balance | cartpole-swingup | acrobot-swingup
//! seeds = [0, 1, 2]
//! episodes = 300
//! init = "orthogonal"            # optional override of the algorithm's scheme
//!
//! [ppo]
//! lrs = true
//! kl_cutoff = false
//! ```
//!
//! Every key except `algorithm` and `env` is optional. Missing experiment keys
//! take the values of [`ExperimentConfig::new`], missing algorithm keys the
//! algorithm's defaults. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trickbench_core::agents::{PpoConfig, SacConfig, Td3Config, TrpoConfig};
use trickbench_core::env::Task;
use trickbench_core::harness::{Algorithm, ExperimentConfig};
use trickbench_core::init::InitKind;

use crate::error::{Error, Result};

/// Keys accepted in the `[experiment]` section.
pub const EXPERIMENT_KEYS: [&str; 11] = [
    "algorithm",
    "env",
    "seeds",
    "episodes",
    "eval_interval",
    "eval_episodes",
    "input_normalization",
    "init",
    "orthogonal_gain",
    "target_return",
    "full_length",
];

/// Episode count of a full-length run.
pub const FULL_LENGTH_EPISODES: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: ExperimentSection,
    #[serde(default)]
    ppo: PpoConfig,
    #[serde(default)]
    trpo: TrpoConfig,
    #[serde(default)]
    td3: Td3Config,
    #[serde(default)]
    sac: SacConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    algorithm: Algorithm,
    env: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eval_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eval_episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_normalization: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<InitKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orthogonal_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_return: Option<f64>,
    /// Shorthand for `episodes = 1000`; ignored when `episodes` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    full_length: Option<bool>,
}

impl ConfigFile {
    fn into_experiment(self) -> ExperimentConfig {
        let e = self.experiment;
        let base = ExperimentConfig::new(e.algorithm, e.env);
        let episodes = match (e.episodes, e.full_length) {
            (Some(n), _) => n,
            (None, Some(true)) => FULL_LENGTH_EPISODES,
            _ => base.episodes,
        };
        ExperimentConfig {
            seeds: e.seeds.unwrap_or(base.seeds),
            episodes,
            eval_interval: e.eval_interval.unwrap_or(base.eval_interval),
            eval_episodes: e.eval_episodes.unwrap_or(base.eval_episodes),
            input_normalization: e.input_normalization.unwrap_or(base.input_normalization),
            init: e.init,
            orthogonal_gain: e.orthogonal_gain.unwrap_or(base.orthogonal_gain),
            target_return: e.target_return,
            ppo: self.ppo,
            trpo: self.trpo,
            td3: self.td3,
            sac: self.sac,
            ..base
        }
    }

    fn from_experiment(c: &ExperimentConfig) -> Self {
        Self {
            experiment: ExperimentSection {
                algorithm: c.algorithm,
                env: c.env,
                seeds: Some(c.seeds.clone()),
                episodes: Some(c.episodes),
                eval_interval: Some(c.eval_interval),
                eval_episodes: Some(c.eval_episodes),
                input_normalization: Some(c.input_normalization),
                init: c.init,
                orthogonal_gain: Some(c.orthogonal_gain),
                target_return: c.target_return,
                full_length: None,
            },
            ppo: c.ppo.clone(),
            trpo: c.trpo.clone(),
            td3: c.td3.clone(),
            sac: c.sac.clone(),
        }
    }
}

/// Parses and validates a config from an already parsed TOML table.
pub fn from_table(table: toml::Table) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?;
    let config = file.into_experiment();
    config.validate()?;
    Ok(config)
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Toml(e.to_string()))
}

/// Parses and validates a config.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    from_table(parse_table(text)?)
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse(&text).map_err(|e| match e {
        Error::Toml(m) => Error::Toml(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Fully explicit TOML for `config`; [`parse`] reproduces it exactly.
pub fn to_toml(config: &ExperimentConfig) -> String {
    toml::to_string(&ConfigFile::from_experiment(config)).expect("config types serialize to TOML")
}

pub fn to_table(config: &ExperimentConfig) -> toml::Table {
    toml::Table::try_from(ConfigFile::from_experiment(config)).expect("config types serialize to TOML")
}

/// First 16 hex digits of the SHA-256 of [`to_toml`].
pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(to_toml(config).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse("[experiment]\nalgorithm = \"td3\"\nenv = \"acrobot-swingup\"\n").unwrap();
        assert_eq!(c, ExperimentConfig::new(Algorithm::Td3, Task::AcrobotSwingup));
    }

    #[test]
    fn full_length_sets_episodes() {
        let text = "[experiment]\nalgorithm = \"ppo\"\nenv = \"cartpole-balance\"\nfull_length = true\n";
        assert_eq!(parse(text).unwrap().episodes, FULL_LENGTH_EPISODES);
    }

    #[test]
    fn hash_depends_on_content() {
        let a = ExperimentConfig::new(Algorithm::Ppo, Task::CartpoleSwingup);
        let mut b = a.clone();
        b.ppo.lrs = !b.ppo.lrs;
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 16);
    }
}
