//! Command-line front end for the `skipring` simulator: bound curves,
//! optimal timeouts, training runs and parameter sweeps, all emitted as CSV.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, Result};
