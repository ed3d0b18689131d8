//! Streaming adaptive completion of an exactly low-rank matrix.
//!
//! Columns are visited once, in order. Each column is probed on a shared
//! index list `Ω` of `m` rows. If the probe has energy outside the
//! subsampled span of the current basis, the column is read in full, its
//! direction is added to the basis, and `Ω` is redrawn. Otherwise the column
//! is completed by least squares on the probe.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::truncate_to_rank;
use crate::oracle::{EntryOracle, Ledger};
use crate::rng::Rng;
use crate::sampling::{draw_indices, IndexList};
use crate::subspace::{OrthoBasis, SubsampledProjector};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub estimate: DMatrix<f64>,
    pub basis: OrthoBasis,
    /// Columns read in full, in visiting order.
    pub fully_observed_columns: Vec<usize>,
    /// Fully observed columns that added a direction to the basis.
    pub basis_columns: Vec<usize>,
    /// Columns read in full because the subsampled basis was singular.
    pub singular_fallbacks: Vec<usize>,
    pub unique_entries_observed: u64,
    pub raw_queries: u64,
    /// Probe residual energy of every column at the time it was visited.
    pub per_column_residuals: Vec<f64>,
    /// Number of times `Ω` was redrawn after the initial draw.
    pub resample_events: usize,
    /// Oracle counters at the end of the run.
    pub ledger: Ledger,
}

impl CompletionResult {
    /// The sample-complexity ceiling `d k + n m` for this run, with `k` the
    /// number of fully observed columns.
    pub fn budget_ceiling(&self, m: usize) -> u64 {
        let (d, n) = self.estimate.shape();
        (d * self.fully_observed_columns.len() + n * m) as u64
    }
}

/// Runs adaptive completion with `m` probes per column and residual
/// threshold `tau_rel` (relative to the probe energy).
pub fn adaptive_complete(oracle: &EntryOracle<'_>, m: usize, tau_rel: f64, rng: &mut Rng) -> Result<CompletionResult> {
    let (d, n) = oracle.shape();
    if m == 0 || m > d {
        return Err(invalid(format!("per-column probe count must lie in [1, d = {d}], got {m}")));
    }
    if !(tau_rel >= 0.0 && tau_rel.is_finite()) {
        return Err(invalid(format!("tau_rel must be finite and nonnegative, got {tau_rel}")));
    }
    // Relative norm tolerance consistent with the energy threshold.
    let push_tol = tau_rel.sqrt().max(f64::EPSILON);
    let start_raw = oracle.raw_queries();
    let start_unique = oracle.unique_entries();

    let mut basis = OrthoBasis::empty(d);
    let mut omega: IndexList = draw_indices(d, m, rng)?;
    let mut projector = SubsampledProjector::new(&basis, &omega)?;

    let mut estimate = DMatrix::zeros(d, n);
    let mut fully_observed = Vec::new();
    let mut basis_columns = Vec::new();
    let mut fallbacks = Vec::new();
    let mut residuals = Vec::with_capacity(n);
    let mut resample_events = 0;

    for t in 0..n {
        let probe = oracle.query_many(t, &omega)?;
        let report = projector.residual(&probe)?;
        residuals.push(report.energy);

        let completed = if report.exceeds(probe.norm_squared(), tau_rel) {
            None
        } else {
            match projector.coefficients(&probe) {
                Ok(coeffs) => Some(basis.columns() * coeffs),
                Err(Error::SingularSystem { .. }) => {
                    fallbacks.push(t);
                    None
                }
                Err(e) => return Err(e),
            }
        };

        match completed {
            Some(column) => estimate.set_column(t, &column),
            None => {
                let column: DVector<f64> = oracle.query_column(t)?;
                estimate.set_column(t, &column);
                fully_observed.push(t);
                if basis.push(&column, push_tol) {
                    basis_columns.push(t);
                }
                omega = draw_indices(d, m, rng)?;
                resample_events += 1;
                projector = SubsampledProjector::new(&basis, &omega)?;
            }
        }
    }

    Ok(CompletionResult {
        estimate,
        basis,
        fully_observed_columns: fully_observed,
        basis_columns,
        singular_fallbacks: fallbacks,
        unique_entries_observed: oracle.unique_entries() - start_unique,
        raw_queries: oracle.raw_queries() - start_raw,
        per_column_residuals: residuals,
        resample_events,
        ledger: oracle.snapshot_ledger(),
    })
}

/// Outcome of the passive entry-sampling baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveCompletion {
    pub estimate: DMatrix<f64>,
    pub unique_entries_observed: u64,
    pub raw_queries: u64,
    pub ledger: Ledger,
}

/// Passive baseline: reveals `entries` distinct entries chosen uniformly
/// over the whole matrix, fills the rest with zeros and keeps the top `r`
/// singular triplets. Entries are read in column-major order.
pub fn passive_entry_complete(
    oracle: &EntryOracle<'_>,
    entries: usize,
    r: usize,
    rng: &mut Rng,
) -> Result<PassiveCompletion> {
    let (d, n) = oracle.shape();
    if entries > d * n {
        return Err(invalid(format!("cannot reveal {entries} of {} entries", d * n)));
    }
    let start_raw = oracle.raw_queries();
    let start_unique = oracle.unique_entries();
    let mut chosen = rand::seq::index::sample(rng, d * n, entries).into_vec();
    chosen.sort_unstable();
    let mut observed = DMatrix::zeros(d, n);
    for k in chosen {
        let (i, j) = (k % d, k / d);
        observed[(i, j)] = oracle.query(i, j)?;
    }
    Ok(PassiveCompletion {
        estimate: truncate_to_rank(&observed, r),
        unique_entries_observed: oracle.unique_entries() - start_unique,
        raw_queries: oracle.raw_queries() - start_raw,
        ledger: oracle.snapshot_ledger(),
    })
}

/// The failure-probability bound `10 r² exp(−√(m / (32 r μ₀)))`.
pub fn theorem1_risk_bound(m: f64, r: f64, mu0: f64) -> Result<f64> {
    if !(m > 0.0 && r > 0.0 && mu0 > 0.0) {
        return Err(invalid(format!("m, r and mu0 must be positive (got {m}, {r}, {mu0})")));
    }
    Ok(10.0 * r * r * (-(m / (32.0 * r * mu0)).sqrt()).exp())
}

/// Probe count that drives the risk bound down to `delta`:
/// `32 r μ₀ log²(10 r² / δ)`.
pub fn theorem1_required_m(r: f64, mu0: f64, delta: f64) -> Result<f64> {
    if !(r > 0.0 && mu0 > 0.0) {
        return Err(invalid("r and mu0 must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(32.0 * r * mu0 * (10.0 * r * r / delta).ln().powi(2))
}
