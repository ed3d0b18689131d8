//! Error metrics shared by all experiments. These read the ground truth
//! directly and belong on the evaluation side, never inside an algorithm.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{singular_values, spectral_norm, tail_energy};
use crate::subspace::OrthoBasis;

/// Relative Frobenius error at or below which a recovery counts as exact.
pub const DEFAULT_SUCCESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `‖X − X̂‖_F`.
    pub frob_error: f64,
    /// `‖X − X̂‖₂`.
    pub spectral_error: f64,
    /// `‖X − X_r‖_F`.
    pub best_rank_r_error: f64,
    /// `(‖X − X̂‖_F − ‖X − X_r‖_F) / ‖X‖_F`.
    pub excess_risk_eps: f64,
    /// `‖X − X̂‖_F / ‖X‖_F`.
    pub relative_frob_error: f64,
    pub exact_success: bool,
}

/// Precomputed spectrum of a ground-truth matrix, reusable across estimates.
#[derive(Debug, Clone)]
pub struct TruthSpectrum {
    pub singular_values: DVector<f64>,
    pub frob_norm: f64,
}

impl TruthSpectrum {
    pub fn new(truth: &DMatrix<f64>) -> Self {
        Self { singular_values: singular_values(truth), frob_norm: truth.norm() }
    }

    /// Same spectrum, computed from `Qᵀ X` when the columns of `truth` lie in
    /// `span`. Falls back to [`TruthSpectrum::new`] otherwise.
    pub fn within(truth: &DMatrix<f64>, span: &OrthoBasis) -> Self {
        let frob_norm = truth.norm();
        match span_singular_values(truth, span, frob_norm) {
            Some(sv) => Self { singular_values: sv, frob_norm },
            None => Self::new(truth),
        }
    }
}

/// Columns of `a` count as lying in `span` when the out-of-span part has
/// Frobenius norm at most this fraction of the reference norm.
pub const SPAN_TOL: f64 = 1e-12;

// Singular values of `a` through the `k × n` matrix `Qᵀ a`, or `None` when
// `a` has a non-negligible component outside `span`.
fn span_singular_values(a: &DMatrix<f64>, span: &OrthoBasis, reference: f64) -> Option<DVector<f64>> {
    if span.ambient() != a.nrows() || span.dim() >= a.nrows().min(a.ncols()) {
        return None;
    }
    let q = span.columns();
    let coords = q.transpose() * a;
    let outside = (a - q * &coords).norm();
    (outside <= SPAN_TOL * reference).then(|| singular_values(&coords))
}

pub fn error_report(truth: &DMatrix<f64>, estimate: &DMatrix<f64>, r: usize) -> Result<ErrorReport> {
    error_report_with(truth, &TruthSpectrum::new(truth), estimate, r, DEFAULT_SUCCESS_TOL)
}

/// [`error_report`] with a cached truth spectrum and a custom exact-recovery
/// tolerance.
pub fn error_report_with(
    truth: &DMatrix<f64>,
    spectrum: &TruthSpectrum,
    estimate: &DMatrix<f64>,
    r: usize,
    success_tol: f64,
) -> Result<ErrorReport> {
    if truth.shape() != estimate.shape() {
        return Err(invalid(format!("shape mismatch: {:?} vs {:?}", truth.shape(), estimate.shape())));
    }
    if spectrum.frob_norm == 0.0 {
        return Err(Error::DegenerateInput("excess risk is undefined for a zero ground truth".into()));
    }
    let diff = truth - estimate;
    let frob_error = diff.norm();
    let spectral_error = if frob_error == 0.0 { 0.0 } else { spectral_norm(&diff) };
    Ok(assemble(spectrum, frob_error, spectral_error, r, success_tol))
}

/// [`error_report_with`] for matrices whose difference is known to lie in a
/// low-dimensional `span`, as when a noiseless instance is completed from its
/// own columns. The spectral error is then read off the `k × n` projection,
/// exact up to `SPAN_TOL · ‖X‖_F`; if the difference leaves the span a full
/// SVD is used instead.
pub fn error_report_within(
    truth: &DMatrix<f64>,
    spectrum: &TruthSpectrum,
    estimate: &DMatrix<f64>,
    r: usize,
    success_tol: f64,
    span: &OrthoBasis,
) -> Result<ErrorReport> {
    if truth.shape() != estimate.shape() {
        return Err(invalid(format!("shape mismatch: {:?} vs {:?}", truth.shape(), estimate.shape())));
    }
    if spectrum.frob_norm == 0.0 {
        return Err(Error::DegenerateInput("excess risk is undefined for a zero ground truth".into()));
    }
    let diff = truth - estimate;
    let frob_error = diff.norm();
    let spectral_error = if frob_error == 0.0 {
        0.0
    } else {
        match span_singular_values(&diff, span, spectrum.frob_norm) {
            Some(sv) => sv.iter().copied().fold(0.0, f64::max),
            None => spectral_norm(&diff),
        }
    };
    Ok(assemble(spectrum, frob_error, spectral_error, r, success_tol))
}

fn assemble(spectrum: &TruthSpectrum, frob_error: f64, spectral_error: f64, r: usize, success_tol: f64) -> ErrorReport {
    let best_rank_r_error = tail_energy(&spectrum.singular_values, r);
    let relative_frob_error = frob_error / spectrum.frob_norm;
    ErrorReport {
        frob_error,
        spectral_error,
        best_rank_r_error,
        excess_risk_eps: (frob_error - best_rank_r_error) / spectrum.frob_norm,
        relative_frob_error,
        exact_success: relative_frob_error <= success_tol,
    }
}

/// `‖X̂ − A‖_F`: distance from the estimate to the low-rank parameter.
pub fn parameter_recovery_report(low_rank: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    if low_rank.shape() != estimate.shape() {
        return Err(invalid(format!("shape mismatch: {:?} vs {:?}", low_rank.shape(), estimate.shape())));
    }
    Ok((estimate - low_rank).norm())
}
