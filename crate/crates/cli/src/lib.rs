//! Command-line experiments for backward volume contraction: configuration,
//! subcommand pipelines and report emission.

pub mod config;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{run, Command, Failure, Outcome, RunOptions};
