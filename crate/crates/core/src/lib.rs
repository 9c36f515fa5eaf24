//! Deep reinforcement-learning building blocks with every implementation
//! detail exposed as a toggle.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. It contains a small dense autodiff engine, the four common weight
//! initialization schemes, in-repo continuous-control tasks, running input
//! normalization, the three policy parameterizations used by PPO/TRPO, TD3
//! and SAC, the agents themselves and the statistics used to compare runs.
//! File formats, the multi-seed runner and the CLI live in the `trickbench`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adam;
pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod init;
pub mod linalg;
pub mod math;
pub mod mlp;
pub mod policy;
pub mod rng;
pub mod runnorm;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::Tensor;
