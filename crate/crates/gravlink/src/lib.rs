//! Command-line front end and batch runner for `gravlink-core`.

pub mod build;
pub mod cli;
pub mod commands;
pub mod config;
pub mod ensemble;
pub mod output;
pub mod run_config;

pub use commands::CliError;
pub use config::{Config, ConfigError};
pub use run_config::RunConfig;
