//! Command-line harness: configuration, the simulate/train/analyze steps,
//! the benchmark suite and its audit.

pub mod audit;
pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
