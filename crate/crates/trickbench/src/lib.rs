//! Config files, CSV outputs, the parallel multi-seed runner and the
//! `trickbench` command line for [`trickbench_core`].

pub mod config;
pub mod csvio;
pub mod error;
pub mod runner;

pub use error::{Error, Result};
