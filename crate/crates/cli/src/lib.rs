//! Command implementations behind the `dynkin` binary.
//!
//! Each `cmd_*` function takes a resolved [`RunConfig`] and returns a report;
//! the binary only parses flags, prints and maps errors to exit codes.

pub mod commands;
pub mod config;
pub mod format;
pub mod verify;

pub use commands::{
    cmd_perpetual, cmd_price, cmd_price_american, cmd_sweep, cmd_tree, perpetual_reference,
    run_seed, PerpetualReport, SolveReport, SweepRow, TreeReport,
};
pub use config::{FileConfig, Overrides, RunConfig};
pub use format::{format_sig, sweep_csv};
pub use verify::{cmd_verify, Check, VerifyReport};

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] dynkin_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Every error is a problem with the inputs or environment; failed
    /// checks are reported through [`VerifyReport`] instead.
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
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
                .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
