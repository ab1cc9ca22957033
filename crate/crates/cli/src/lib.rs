//! Configuration, orchestration and output for the `nmbath` command.

pub mod commands;
pub mod config;
mod output;

pub use commands::{load_config, run, CliError, Command};
pub use config::{ConfigError, RunConfig};
