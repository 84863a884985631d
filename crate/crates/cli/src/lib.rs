//! Command-line driver for the `sic_core` clustering engine.
//!
//! Exit codes: 0 success, 2 configuration error (including missing input
//! files), 3 data or format error, 4 numeric failure.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use cli::{dispatch, Cli, Command};
pub use config::RunConfig;
pub use error::CliError;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "SIC_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`] when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={value:?} must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}
