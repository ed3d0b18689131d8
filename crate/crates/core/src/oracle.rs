//! The only path by which algorithms read matrix entries.
//!
//! An [`EntryOracle`] wraps a hidden matrix and counts every query. Raw
//! queries count each request; unique entries count each `(row, column)`
//! pair once. Counters are atomic so column-parallel passes can share one
//! oracle.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::sampling::IndexList;

/// Above this many logged queries the access log keeps a reservoir sample.
pub const DEFAULT_LOG_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OracleOptions {
    /// Maximum number of unique entries that may be revealed.
    pub budget_cap: Option<u64>,
    /// Record `(row, col)` accesses; the value is the full-log limit.
    pub access_log: Option<usize>,
    /// Reject a query to column `j` after any column `> j` has been read.
    pub enforce_streaming: bool,
}

/// An immutable copy of the oracle's counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    pub raw_queries: u64,
    pub unique_entries: u64,
    pub per_column_unique: Vec<u64>,
}

impl Ledger {
    /// Quantiles of the per-column unique counts, by nearest rank.
    pub fn per_column_quantile(&self, q: f64) -> u64 {
        if self.per_column_unique.is_empty() {
            return 0;
        }
        let mut sorted = self.per_column_unique.clone();
        sorted.sort_unstable();
        let idx = ((q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round()) as usize;
        sorted[idx]
    }
}

#[derive(Debug)]
struct AccessLog {
    limit: usize,
    seen: u64,
    entries: Vec<(usize, usize)>,
    rng: ChaCha8Rng,
}

impl AccessLog {
    fn new(limit: usize) -> Self {
        Self { limit, seen: 0, entries: Vec::new(), rng: ChaCha8Rng::seed_from_u64(0x10c) }
    }

    fn record(&mut self, row: usize, col: usize) {
        self.seen += 1;
        if self.entries.len() < self.limit {
            self.entries.push((row, col));
        } else {
            // Reservoir sampling once the full log would exceed its limit.
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.limit {
                self.entries[j as usize] = (row, col);
            }
        }
    }
}

#[derive(Debug)]
pub struct EntryOracle<'a> {
    hidden: &'a DMatrix<f64>,
    options: OracleOptions,
    raw: AtomicU64,
    unique: AtomicU64,
    per_column: Vec<AtomicU64>,
    seen: Vec<AtomicU64>,
    latest_column: AtomicUsize,
    log: Option<Mutex<AccessLog>>,
}

const NO_COLUMN: usize = usize::MAX;

impl<'a> EntryOracle<'a> {
    pub fn new(hidden: &'a DMatrix<f64>) -> Self {
        Self::with_options(hidden, OracleOptions::default())
    }

    pub fn with_options(hidden: &'a DMatrix<f64>, options: OracleOptions) -> Self {
        let (d, n) = hidden.shape();
        Self {
            hidden,
            options,
            raw: AtomicU64::new(0),
            unique: AtomicU64::new(0),
            per_column: (0..n).map(|_| AtomicU64::new(0)).collect(),
            seen: (0..(d * n).div_ceil(64)).map(|_| AtomicU64::new(0)).collect(),
            latest_column: AtomicUsize::new(NO_COLUMN),
            log: options.access_log.map(|limit| Mutex::new(AccessLog::new(limit))),
        }
    }

    pub fn nrows(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.hidden.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.hidden.shape()
    }

    fn check_column(&self, col: usize) -> Result<()> {
        if col >= self.ncols() {
            return Err(invalid(format!("column {col} out of range for {} columns", self.ncols())));
        }
        if self.options.enforce_streaming {
            let prev = self
                .latest_column
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |latest| {
                    (latest == NO_COLUMN || col >= latest).then_some(col)
                });
            if let Err(latest) = prev {
                return Err(Error::StreamingViolation { requested: col, latest });
            }
        }
        Ok(())
    }

    // Marks (row, col) as seen, enforcing the cap on unique entries.
    fn reveal(&self, row: usize, col: usize) -> Result<()> {
        let bit = col * self.nrows() + row;
        let mask = 1u64 << (bit % 64);
        let word = &self.seen[bit / 64];
        if word.fetch_or(mask, Ordering::SeqCst) & mask == 0 {
            let now = self.unique.fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(cap) = self.options.budget_cap {
                if now > cap {
                    self.unique.fetch_sub(1, Ordering::SeqCst);
                    word.fetch_and(!mask, Ordering::SeqCst);
                    return Err(Error::BudgetExceeded { cap });
                }
            }
            self.per_column[col].fetch_add(1, Ordering::SeqCst);
        }
        self.raw.fetch_add(1, Ordering::SeqCst);
        if let Some(log) = &self.log {
            log.lock().expect("access log poisoned").record(row, col);
        }
        Ok(())
    }

    pub fn query(&self, row: usize, col: usize) -> Result<f64> {
        if row >= self.nrows() {
            return Err(invalid(format!("row {row} out of range for {} rows", self.nrows())));
        }
        self.check_column(col)?;
        self.reveal(row, col)?;
        Ok(self.hidden[(row, col)])
    }

    /// Reads column `col` at every index of `omega`, duplicates included.
    pub fn query_many(&self, col: usize, omega: &IndexList) -> Result<DVector<f64>> {
        if omega.dim() != self.nrows() {
            return Err(invalid(format!(
                "index list dimension {} does not match {} rows",
                omega.dim(),
                self.nrows()
            )));
        }
        self.check_column(col)?;
        let mut out = DVector::zeros(omega.len());
        for (slot, &row) in out.iter_mut().zip(omega.entries()) {
            self.reveal(row, col)?;
            *slot = self.hidden[(row, col)];
        }
        Ok(out)
    }

    /// Fully observes column `col`.
    pub fn query_column(&self, col: usize) -> Result<DVector<f64>> {
        self.check_column(col)?;
        for row in 0..self.nrows() {
            self.reveal(row, col)?;
        }
        Ok(self.hidden.column(col).into_owned())
    }

    pub fn raw_queries(&self) -> u64 {
        self.raw.load(Ordering::SeqCst)
    }

    pub fn unique_entries(&self) -> u64 {
        self.unique.load(Ordering::SeqCst)
    }

    /// Whether `(row, col)` has been revealed.
    pub fn is_revealed(&self, row: usize, col: usize) -> bool {
        let bit = col * self.nrows() + row;
        self.seen[bit / 64].load(Ordering::SeqCst) & (1u64 << (bit % 64)) != 0
    }

    pub fn snapshot_ledger(&self) -> Ledger {
        Ledger {
            raw_queries: self.raw_queries(),
            unique_entries: self.unique_entries(),
            per_column_unique: self.per_column.iter().map(|c| c.load(Ordering::SeqCst)).collect(),
        }
    }

    /// The recorded accesses: in order while under the log limit, a uniform
    /// reservoir sample afterwards. Empty when logging is off.
    pub fn access_log(&self) -> Vec<(usize, usize)> {
        self.log
            .as_ref()
            .map(|l| l.lock().expect("access log poisoned").entries.clone())
            .unwrap_or_default()
    }

    /// Total number of accesses seen by the log, including those not kept.
    pub fn logged_accesses(&self) -> u64 {
        self.log.as_ref().map_or(0, |l| l.lock().expect("access log poisoned").seen)
    }
}
