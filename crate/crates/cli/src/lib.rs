//! Configuration, presets and artifact writing behind the `pnp` binary.

pub mod artifacts;
pub mod config;

pub use artifacts::{run_convergence_study, run_experiment, CliError, RunSummary, StudySummary};
pub use config::{parse_config, parse_config_with, ConfigError, ExperimentConfig};
