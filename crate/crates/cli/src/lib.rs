//! Library half of the `clockwalk` binary: configuration handling and the
//! four subcommands, usable directly from tests.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_amplitude, cmd_sample, cmd_stats, cmd_verify, StatsInputs};
pub use config::{Mode, OutputFormat, Overrides, RunConfig};
pub use error::CliError;

/// Runs `f` on a dedicated rayon pool of `threads` workers, or on the global
/// pool when `None`.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
