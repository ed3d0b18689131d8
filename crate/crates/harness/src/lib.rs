//! Configuration-driven experiments for adaptive completion and
//! approximation: grid sweeps written as CSV, threshold location, plot
//! script generation and matrix files.
//!
//! Environment:
//! * `AMC_OUTPUT_DIR`: directory that relative output paths are resolved
//!   against (default: the working directory).
//! * `AMC_THREADS`: size of the worker pool (default: one per core).

pub mod config;
pub mod matrix_io;
pub mod plots;
pub mod records;
pub mod report;
pub mod sweeps;
pub mod threshold;

use std::path::{Path, PathBuf};

use anyhow::Result;

use crate::records::{aggregate, summary_path, write_csv, write_trials};
use crate::sweeps::Outcome;

pub const OUTPUT_DIR_VAR: &str = "AMC_OUTPUT_DIR";
pub const THREADS_VAR: &str = "AMC_THREADS";

/// Resolves a relative output path against `AMC_OUTPUT_DIR` when it is set.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Sizes the global worker pool from `AMC_THREADS`, if set. Returns the
/// number of threads requested.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(None) };
    let threads: usize = raw.trim().parse().map_err(|_| anyhow::anyhow!("{THREADS_VAR} must be a positive integer"))?;
    if threads == 0 {
        anyhow::bail!("{THREADS_VAR} must be a positive integer");
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(Some(threads))
}

/// Writes the raw CSV and, for trial tables, the summary CSV next to it.
/// Returns the paths written.
pub fn write_outcome(raw_path: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    match outcome {
        Outcome::Trials(rows) => {
            write_trials(raw_path, rows)?;
            let summary = summary_path(raw_path);
            write_csv(&summary, &aggregate(rows))?;
            Ok(vec![raw_path.to_path_buf(), summary])
        }
        Outcome::Coverage(rows) => {
            write_csv(raw_path, rows)?;
            Ok(vec![raw_path.to_path_buf()])
        }
    }
}
