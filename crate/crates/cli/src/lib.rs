//! Experiment runner: configuration, orchestration and CSV artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod stats;

pub use commands::{Context, Outcome};
pub use config::{ExperimentConfig, LoadedConfig};
pub use error::{CliError, Result};
