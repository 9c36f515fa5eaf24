//! Multi-seed experiment loop with offline evaluation, and the statistics
//! used to compare configurations.

pub mod experiment;
pub mod stats;

pub use experiment::{
    build_agent, evaluate, run_experiment, run_seed, Algorithm, CurveRecord, ExperimentConfig, RunFailure, SeedRun,
};
pub use stats::{bootstrap_ci, effect_size, mean, sample_std, CiResult};
