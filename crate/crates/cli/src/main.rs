use std::fmt;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod manifest;

use args::Cli;

/// Command failure, mapped onto the exit code contract.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or flag combinations (exit 2).
    Usage(String),
    /// Unreadable or invalid input, failed writes (exit 1).
    Data(String),
    /// Non-finite training loss (exit 3).
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Diverged(m) => f.write_str(m),
        }
    }
}

impl From<hybfer::Error> for Failure {
    fn from(e: hybfer::Error) -> Self {
        match e {
            hybfer::Error::Divergence { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

/// Caps the worker pool from `HYBFER_THREADS` (0 or unset: one per core).
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("HYBFER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("HYBFER_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Data(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
