//! Index sampling, row subsampling, and the zero-fill rescale operator.
//!
//! Indices are 0-based. An [`IndexList`] is an ordered multiset: sampling is
//! uniform with replacement, so duplicates are expected and kept.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::subspace::OrthoBasis;

/// A list of `m` row indices drawn from `[0, d)`, possibly with duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexList {
    entries: Vec<usize>,
    dim: usize,
}

impl IndexList {
    /// Wraps an explicit list. Every entry must lie in `[0, dim)`.
    pub fn new(entries: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("index list dimension must be at least 1"));
        }
        if let Some(&bad) = entries.iter().find(|&&i| i >= dim) {
            return Err(invalid(format!("index {bad} out of range for dimension {dim}")));
        }
        Ok(Self { entries, dim })
    }

    /// Every index of `[0, dim)` exactly once, in order.
    pub fn full(dim: usize) -> Result<Self> {
        Self::new((0..dim).collect(), dim)
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of distinct indices in the list.
    pub fn distinct(&self) -> usize {
        let mut seen = vec![false; self.dim];
        self.entries
            .iter()
            .filter(|&&i| !std::mem::replace(&mut seen[i], true))
            .count()
    }
}

/// Draws `m` indices i.i.d. uniform on `[0, d)`.
pub fn draw_indices(d: usize, m: usize, rng: &mut Rng) -> Result<IndexList> {
    if d == 0 || m == 0 {
        return Err(invalid(format!("draw_indices needs d >= 1 and m >= 1 (got d={d}, m={m})")));
    }
    let entries = (0..m).map(|_| rng.random_range(0..d)).collect();
    Ok(IndexList { entries, dim: d })
}

/// `x_Ω`: the coordinates of `x` at the sampled indices, duplicates repeated.
pub fn subsample_vector(x: &DVector<f64>, omega: &IndexList) -> Result<DVector<f64>> {
    if x.len() != omega.dim() {
        return Err(invalid(format!(
            "vector has length {} but index list has dimension {}",
            x.len(),
            omega.dim()
        )));
    }
    Ok(DVector::from_iterator(
        omega.len(),
        omega.entries().iter().map(|&i| x[i]),
    ))
}

/// `U_Ω`: the rows of the basis at the sampled indices.
pub fn subsample_basis(basis: &OrthoBasis, omega: &IndexList) -> Result<DMatrix<f64>> {
    let u = basis.columns();
    if u.nrows() != omega.dim() {
        return Err(invalid(format!(
            "basis has {} rows but index list has dimension {}",
            u.nrows(),
            omega.dim()
        )));
    }
    Ok(subsample_rows(u, omega.entries()))
}

pub(crate) fn subsample_rows(u: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), u.ncols(), |j, c| u[(rows[j], c)])
}

/// The zero-filled, rescaled estimate `R_Ω x` of a length-`d` vector.
///
/// Each draw contributes `(d/m) x(Ω(s))` to coordinate `Ω(s)`, so an index
/// drawn twice accumulates twice. Coordinates never drawn are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledSketchVector {
    values: DVector<f64>,
    source: IndexList,
}

impl RescaledSketchVector {
    /// Builds the estimate from samples aligned with `omega`:
    /// `samples[s]` is the observed value at `omega.entries()[s]`.
    pub fn from_samples(omega: &IndexList, samples: &[f64]) -> Result<Self> {
        if samples.len() != omega.len() {
            return Err(invalid(format!(
                "{} samples supplied for an index list of length {}",
                samples.len(),
                omega.len()
            )));
        }
        if omega.is_empty() {
            return Err(invalid("cannot rescale over an empty index list"));
        }
        let d = omega.dim();
        let scale = d as f64 / omega.len() as f64;
        let mut values = DVector::zeros(d);
        for (&i, &v) in omega.entries().iter().zip(samples) {
            values[i] += scale * v;
        }
        Ok(Self { values, source: omega.clone() })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn source(&self) -> &IndexList {
        &self.source
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }
}

/// `R_Ω x` from a map of observed values keyed by row index.
pub fn zero_fill_rescale(
    values: &HashMap<usize, f64>,
    omega: &IndexList,
    d: usize,
) -> Result<RescaledSketchVector> {
    if omega.dim() != d {
        return Err(invalid(format!(
            "index list dimension {} does not match d = {d}",
            omega.dim()
        )));
    }
    let samples = omega
        .entries()
        .iter()
        .map(|i| {
            values
                .get(i)
                .copied()
                .ok_or_else(|| invalid(format!("no value supplied for sampled index {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    RescaledSketchVector::from_samples(omega, &samples)
}
