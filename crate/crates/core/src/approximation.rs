//! Two-pass adaptive low-rank approximation and its passive baseline.
//!
//! Pass one estimates every column's squared norm from a few uniform
//! samples. Pass two spends a per-column budget proportional to those
//! estimates and places the zero-filled, rescaled samples into a sketch
//! `X̃`. The output is the best rank-`r` approximation of the sketch.
//!
//! Both passes are parallel over columns. Column `t` draws from a stream
//! derived from the pass seed and `t`, so results do not depend on the
//! thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::Svd;
use crate::oracle::{EntryOracle, Ledger};
use crate::rng::{self, Rng};
use crate::sampling::{draw_indices, IndexList, RescaledSketchVector};

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimates {
    /// `ĉ_t = (d/m₁) ‖x_{t,Ω_t}‖²`.
    pub c_hat: Vec<f64>,
    /// `f̂ = Σ_t ĉ_t`.
    pub f_hat: f64,
    pub m1: usize,
}

impl NormEstimates {
    fn from_column_energies(c_hat: Vec<f64>, m1: usize) -> Self {
        let f_hat = c_hat.iter().sum();
        Self { c_hat, f_hat, m1 }
    }
}

/// Pass one: `m1` uniform samples per column.
pub fn estimate_column_norms(oracle: &EntryOracle<'_>, m1: usize, rng: &mut Rng) -> Result<NormEstimates> {
    let (d, n) = oracle.shape();
    if m1 == 0 || m1 > d {
        return Err(invalid(format!("m1 must lie in [1, d = {d}], got {m1}")));
    }
    let seed = rng::split(rng);
    let scale = d as f64 / m1 as f64;
    let c_hat = (0..n)
        .into_par_iter()
        .map(|t| {
            let omega = draw_indices(d, m1, &mut rng::derive(seed, &[t as u64]))?;
            Ok(scale * oracle.query_many(t, &omega)?.norm_squared())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormEstimates::from_column_energies(c_hat, m1))
}

/// Exact column norms from full reads, in the same shape as pass one with
/// `m1 = d`.
pub fn full_read_column_norms(oracle: &EntryOracle<'_>) -> Result<NormEstimates> {
    let (d, n) = oracle.shape();
    let c_hat = (0..n)
        .map(|t| Ok(oracle.query_column(t)?.norm_squared()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormEstimates::from_column_energies(c_hat, d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleAllocation {
    pub per_column: Vec<usize>,
    pub total: usize,
}

impl SampleAllocation {
    pub fn from_counts(per_column: Vec<usize>, d: usize) -> Result<Self> {
        if let Some(&bad) = per_column.iter().find(|&&c| c == 0 || c > d) {
            return Err(invalid(format!("per-column sample count {bad} outside [1, {d}]")));
        }
        let total = per_column.iter().sum();
        Ok(Self { per_column, total })
    }

    /// `m` samples in every one of `n` columns.
    pub fn uniform(n: usize, m: usize, d: usize) -> Result<Self> {
        Self::from_counts(vec![m; n], d)
    }

    /// Difference between the realized total and a requested total.
    pub fn drift(&self, requested_total: usize) -> i64 {
        self.total as i64 - requested_total as i64
    }
}

/// `m_{2,t} = clamp(round(m₂ n ĉ_t / f̂), 1, d)`.
pub fn allocate_samples(est: &NormEstimates, m2: usize, n: usize, d: usize) -> Result<SampleAllocation> {
    if m2 == 0 {
        return Err(invalid("m2 must be at least 1"));
    }
    if est.c_hat.len() != n {
        return Err(invalid(format!("{} norm estimates for {n} columns", est.c_hat.len())));
    }
    if !(est.f_hat > 0.0) {
        return Err(Error::DegenerateInput("estimated Frobenius norm is zero; nothing to allocate".into()));
    }
    let budget = (m2 * n) as f64;
    let per_column = est
        .c_hat
        .iter()
        .map(|&c| ((budget * c / est.f_hat).round() as usize).clamp(1, d))
        .collect();
    SampleAllocation::from_counts(per_column, d)
}

/// Pass two: column `t` of the sketch is `R_{Ω_t} x_t` with `|Ω_t| = m_{2,t}`.
pub fn build_sketch(oracle: &EntryOracle<'_>, alloc: &SampleAllocation, rng: &mut Rng) -> Result<DMatrix<f64>> {
    let (d, n) = oracle.shape();
    if alloc.per_column.len() != n {
        return Err(invalid(format!("allocation covers {} columns, matrix has {n}", alloc.per_column.len())));
    }
    let seed = rng::split(rng);
    let columns = (0..n)
        .into_par_iter()
        .map(|t| {
            let omega = draw_indices(d, alloc.per_column[t], &mut rng::derive(seed, &[t as u64]))?;
            sketch_column(oracle, t, &omega)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// `R_Ω x_t` read through the oracle.
pub fn sketch_column(oracle: &EntryOracle<'_>, t: usize, omega: &IndexList) -> Result<DVector<f64>> {
    let samples = oracle.query_many(t, omega)?;
    Ok(RescaledSketchVector::from_samples(omega, samples.as_slice())?.into_values())
}

#[derive(Debug, Clone)]
pub struct ApproxResult {
    /// Rank-`r` truncation of the sketch.
    pub x_hat: DMatrix<f64>,
    pub sketch: DMatrix<f64>,
    pub allocation: SampleAllocation,
    /// `None` for the passive pipeline, which has no first pass.
    pub norm_estimates: Option<NormEstimates>,
    pub unique_entries_observed: u64,
    pub raw_queries: u64,
    pub singular_values_of_sketch: DVector<f64>,
    pub ledger: Ledger,
}

fn finish(
    oracle: &EntryOracle<'_>,
    sketch: DMatrix<f64>,
    r: usize,
    allocation: SampleAllocation,
    norm_estimates: Option<NormEstimates>,
    start: (u64, u64),
) -> ApproxResult {
    let svd = Svd::new(&sketch);
    let x_hat = svd.reconstruct(r);
    ApproxResult {
        x_hat,
        sketch,
        allocation,
        norm_estimates,
        unique_entries_observed: oracle.unique_entries() - start.1,
        raw_queries: oracle.raw_queries() - start.0,
        singular_values_of_sketch: svd.singular_values,
        ledger: oracle.snapshot_ledger(),
    }
}

fn check_rank(r: usize, d: usize, n: usize) -> Result<()> {
    if r == 0 || r > d.min(n) {
        return Err(invalid(format!("target rank must lie in [1, {}], got {r}", d.min(n))));
    }
    Ok(())
}

/// Adaptive pipeline: norm estimation, proportional allocation, sketch,
/// rank-`r` truncation. Uses about `n (m1 + m2)` raw samples.
pub fn adaptive_approximate(
    oracle: &EntryOracle<'_>,
    m1: usize,
    m2: usize,
    r: usize,
    rng: &mut Rng,
) -> Result<ApproxResult> {
    let (d, n) = oracle.shape();
    check_rank(r, d, n)?;
    let start = (oracle.raw_queries(), oracle.unique_entries());
    let est = estimate_column_norms(oracle, m1, rng)?;
    let allocation = allocate_samples(&est, m2, n, d)?;
    let sketch = build_sketch(oracle, &allocation, rng)?;
    Ok(finish(oracle, sketch, r, allocation, Some(est), start))
}

/// Passive baseline: `m_per_column` uniform samples in every column, no
/// first pass, same sketch and truncation.
pub fn passive_approximate(oracle: &EntryOracle<'_>, m_per_column: usize, r: usize, rng: &mut Rng) -> Result<ApproxResult> {
    let (d, n) = oracle.shape();
    check_rank(r, d, n)?;
    let start = (oracle.raw_queries(), oracle.unique_entries());
    let allocation = SampleAllocation::uniform(n, m_per_column, d)?;
    let sketch = build_sketch(oracle, &allocation, rng)?;
    if sketch.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("every observed entry is zero; nothing to approximate".into()));
    }
    Ok(finish(oracle, sketch, r, allocation, None, start))
}
