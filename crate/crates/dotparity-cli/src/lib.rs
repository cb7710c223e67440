//! Library half of the `dotparity` command-line tool: configuration
//! ingestion, subcommand drivers, and machine-readable output. The binary is
//! a thin argument-parsing shell over these, which keeps every code path
//! testable and byte-for-byte comparable.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// Error domain of the front end, mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Malformed configuration or arguments (exit 2).
    Config(String),
    /// Simulation-layer failure (exit 3; impossible-branch conditioning 4).
    Sim(dotparity::Error),
    /// Filesystem failure (exit 2).
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Sim(e) => write!(f, "simulation error: {e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Sim(dotparity::Error::ImpossibleBranch { .. }) => 4,
            CliError::Sim(_) => 3,
        }
    }
}

/// Runs `f` on a dedicated rayon pool of `threads` workers (when given), so
/// the `DOTPARITY_THREADS` cap applies without touching the global pool.
pub fn with_thread_cap<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool construction")
            .install(f),
        _ => f(),
    }
}
