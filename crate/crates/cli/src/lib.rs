//! Command-line experiment runner: resolves configurations, runs tasks and
//! records every artifact in a hashed manifest.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod tasks;

pub use error::{CliError, CliResult};
