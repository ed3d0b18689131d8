//! Orthonormal bases, the subsampled projection residual, column
//! reconstruction from a few rows, and the deviation bounds that govern the
//! residual test.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::Svd;
use crate::instances::{block_basis, subspace_coherence, vector_coherence};
use crate::rng::{self, Rng};
use crate::sampling::{draw_indices, subsample_rows, IndexList};

/// Orthonormality tolerance enforced on every basis.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// `σ_min(U_Ω) < RANK_TOL · σ_max(U_Ω)` marks the subsampled basis singular.
pub const RANK_TOL: f64 = 1e-10;

/// Default relative threshold for the residual test: a probe carries a new
/// direction when its residual energy exceeds `tau_rel · ‖x_Ω‖²`.
pub const DEFAULT_TAU_REL: f64 = 1e-8;

/// A `d × k` matrix with orthonormal columns. `k` may be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    columns: DMatrix<f64>,
}

impl OrthoBasis {
    pub fn empty(d: usize) -> Self {
        Self { columns: DMatrix::zeros(d, 0) }
    }

    /// Accepts a matrix whose columns are already orthonormal.
    pub fn from_orthonormal(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(invalid(format!(
                "basis has {} columns in dimension {}",
                columns.ncols(),
                columns.nrows()
            )));
        }
        let gram = columns.transpose() * &columns;
        let k = columns.ncols();
        let off = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if off > ORTHONORMAL_TOL {
            return Err(invalid(format!("columns are not orthonormal (deviation {off:e})")));
        }
        Ok(Self { columns })
    }

    /// Orthonormalizes the columns of `m` in order, skipping columns that add
    /// no new direction (relative residual norm at or below `rel_tol`).
    pub fn orthonormalize(m: &DMatrix<f64>, rel_tol: f64) -> Self {
        let mut basis = Self::empty(m.nrows());
        for c in m.column_iter() {
            basis.push(&c.into_owned(), rel_tol);
        }
        basis
    }

    /// Ambient dimension `d`.
    pub fn ambient(&self) -> usize {
        self.columns.nrows()
    }

    /// Subspace dimension `k`.
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Adds the direction of `x` by modified Gram-Schmidt with one
    /// re-orthogonalization pass. Returns `false`, leaving the basis
    /// unchanged, when `x` has no component outside the span beyond
    /// `rel_tol · ‖x‖`.
    pub fn push(&mut self, x: &DVector<f64>, rel_tol: f64) -> bool {
        assert_eq!(x.len(), self.ambient(), "vector length must match the ambient dimension");
        let norm = x.norm();
        if norm == 0.0 || !norm.is_finite() || self.dim() == self.ambient() {
            return false;
        }
        let mut w = x.clone();
        for _ in 0..2 {
            for q in self.columns.column_iter() {
                let c = q.dot(&w);
                w.axpy(-c, &q, 1.0);
            }
        }
        let rest = w.norm();
        if rest <= rel_tol * norm {
            return false;
        }
        w /= rest;
        let k = self.dim();
        let mut grown = std::mem::replace(&mut self.columns, DMatrix::zeros(0, 0)).insert_column(k, 0.0);
        grown.set_column(k, &w);
        self.columns = grown;
        true
    }

    /// Orthogonal projection of `x` onto the span.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.columns * (self.columns.transpose() * x)
    }
}

/// Outcome of a residual computation, with the conditioning of `U_Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `‖x_Ω − P_{U_Ω} x_Ω‖²`.
    pub energy: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Numerical rank of `U_Ω`.
    pub rank: usize,
}

impl ResidualReport {
    /// The thresholded test: true when the residual is large enough to count
    /// as a new direction.
    pub fn exceeds(&self, probe_energy: f64, tau_rel: f64) -> bool {
        self.energy > tau_rel * probe_energy
    }
}

/// A factorized subsampled basis `U_Ω`, reusable across many probes that
/// share the same basis and index list.
///
/// The projection is taken through a thin SVD of `U_Ω`; the normal equations
/// are never formed.
#[derive(Debug, Clone)]
pub struct SubsampledProjector {
    k: usize,
    // Left singular vectors with singular values above the rank tolerance.
    left: DMatrix<f64>,
    // Matching right singular vectors scaled by 1/σ, so that
    // coefficients = pinv_right * (leftᵀ x).
    pinv_right: DMatrix<f64>,
    sigma_min: f64,
    sigma_max: f64,
}

impl SubsampledProjector {
    pub fn new(basis: &OrthoBasis, omega: &IndexList) -> Result<Self> {
        if basis.ambient() != omega.dim() {
            return Err(invalid(format!(
                "basis dimension {} does not match index list dimension {}",
                basis.ambient(),
                omega.dim()
            )));
        }
        Self::from_subsampled(subsample_rows(basis.columns(), omega.entries()))
    }

    /// Factorizes an already subsampled `m × k` matrix.
    pub fn from_subsampled(u_omega: DMatrix<f64>) -> Result<Self> {
        if u_omega.iter().any(|v| !v.is_finite()) {
            return Err(invalid("subsampled basis has non-finite entries"));
        }
        let (m, k) = u_omega.shape();
        if k == 0 {
            return Ok(Self {
                k,
                left: DMatrix::zeros(m, 0),
                pinv_right: DMatrix::zeros(0, 0),
                sigma_min: 0.0,
                sigma_max: 0.0,
            });
        }
        let Svd { u, singular_values: sv, v_t } = Svd::new(&u_omega);
        let sigma_max = sv.max();
        let sigma_min = if m < k { 0.0 } else { sv.min() };
        let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > RANK_TOL * sigma_max).collect();
        let left = DMatrix::from_fn(m, keep.len(), |i, j| u[(i, keep[j])]);
        let pinv_right = DMatrix::from_fn(k, keep.len(), |i, j| v_t[(keep[j], i)] / sv[keep[j]]);
        Ok(Self { k, left, pinv_right, sigma_min, sigma_max })
    }

    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn is_singular(&self) -> bool {
        self.k > 0 && !(self.sigma_min >= RANK_TOL * self.sigma_max && self.sigma_max > 0.0)
    }

    fn check_probe(&self, x_omega: &DVector<f64>) -> Result<()> {
        if x_omega.len() != self.rows() {
            return Err(invalid(format!(
                "probe has length {} but subsampled basis has {} rows",
                x_omega.len(),
                self.rows()
            )));
        }
        if x_omega.iter().any(|v| !v.is_finite()) {
            return Err(invalid("probe has non-finite entries"));
        }
        Ok(())
    }

    pub fn residual(&self, x_omega: &DVector<f64>) -> Result<ResidualReport> {
        self.check_probe(x_omega)?;
        let energy = if self.left.ncols() == 0 {
            x_omega.norm_squared()
        } else {
            let mut r = x_omega - &self.left * (self.left.transpose() * x_omega);
            // Second pass removes what round-off left in the span.
            r -= &self.left * (self.left.transpose() * &r);
            r.norm_squared()
        };
        Ok(ResidualReport {
            energy,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
            rank: self.left.ncols(),
        })
    }

    /// Least-squares coefficients `argmin_c ‖U_Ω c − x_Ω‖`.
    pub fn coefficients(&self, x_omega: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_probe(x_omega)?;
        if self.is_singular() {
            return Err(Error::SingularSystem { sigma_min: self.sigma_min, sigma_max: self.sigma_max });
        }
        if self.k == 0 {
            return Ok(DVector::zeros(0));
        }
        Ok(&self.pinv_right * (self.left.transpose() * x_omega))
    }
}

/// `‖x_Ω − P_{span(U_Ω)} x_Ω‖²`. With an empty basis this is `‖x_Ω‖²`.
pub fn residual_energy(x_omega: &DVector<f64>, u_omega: &DMatrix<f64>) -> Result<ResidualReport> {
    if x_omega.len() != u_omega.nrows() {
        return Err(invalid(format!(
            "probe has length {} but subsampled basis has {} rows",
            x_omega.len(),
            u_omega.nrows()
        )));
    }
    SubsampledProjector::from_subsampled(u_omega.clone())?.residual(x_omega)
}

/// Completes a column from its probe: `U · argmin_c ‖U_Ω c − x_Ω‖`.
///
/// If the column lies in the span of `U` and `U_Ω` has full column rank the
/// column is recovered exactly.
pub fn reconstruct_column(
    basis: &OrthoBasis,
    omega: &IndexList,
    x_omega: &DVector<f64>,
) -> Result<DVector<f64>> {
    let projector = SubsampledProjector::new(basis, omega)?;
    let coeffs = projector.coefficients(x_omega)?;
    Ok(basis.columns() * coeffs)
}

/// The constants of the two-sided deviation bound on the subsampled residual.
///
/// For `y = x + v` with `x ∈ U`, `v ⊥ U`, the bound reads
/// `lower_factor · ‖v‖² ≤ ‖y_Ω − P_{U_Ω} y_Ω‖² ≤ upper_factor · ‖v‖²`
/// with probability at least `1 − 4δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub upper_factor: f64,
    /// `None` when the sample-size precondition fails or `γ ≥ 1`.
    pub lower_factor: Option<f64>,
    pub valid: bool,
}

/// Smallest `m` satisfying the sample-size precondition of the residual bound.
pub fn projection_bound_min_m(d: usize, r: usize, mu_u: f64, mu_v: f64, delta: f64) -> f64 {
    let l1 = (1.0 / delta).ln();
    let l2 = (2.0 * d as f64 / delta).ln();
    (8.0 / 3.0 * r as f64 * mu_u * l2).max(4.0 * mu_v * l1)
}

/// Evaluates α, β, γ and the two sandwich factors.
pub fn theorem3_bounds(m: usize, d: usize, r: usize, mu_u: f64, mu_v: f64, delta: f64) -> Result<BoundParams> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if m == 0 || d == 0 {
        return Err(invalid("m and d must be positive"));
    }
    if !(mu_u >= 0.0 && mu_v >= 0.0) {
        return Err(invalid("coherences must be nonnegative"));
    }
    let (mf, df, rf) = (m as f64, d as f64, r as f64);
    let log_inv = (1.0 / delta).ln();
    let alpha = (2.0 * mu_v / mf * log_inv).sqrt() + 2.0 * mu_v / (3.0 * mf) * log_inv;
    let beta = (1.0 + 2.0 * log_inv).powi(2);
    let gamma = (8.0 * rf * mu_u / (3.0 * mf) * (2.0 * df / delta).ln()).sqrt();
    let upper_factor = (1.0 + alpha) * mf / df;
    let valid = mf >= projection_bound_min_m(d, r, mu_u, mu_v, delta) && gamma < 1.0;
    let lower_factor = valid.then(|| (mf * (1.0 - alpha) - rf * mu_u * beta / (1.0 - gamma)) / df);
    Ok(BoundParams { alpha, beta, gamma, upper_factor, lower_factor, valid })
}

/// Result of a Monte Carlo check of the residual bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageReport {
    pub trials: usize,
    /// Trials whose realized `μ(v)` met the precondition.
    pub evaluated: usize,
    /// Evaluated trials where both sides of the bound held.
    pub held: usize,
}

impl CoverageReport {
    pub fn skipped(&self) -> usize {
        self.trials - self.evaluated
    }

    pub fn coverage(&self) -> f64 {
        if self.evaluated == 0 {
            f64::NAN
        } else {
            self.held as f64 / self.evaluated as f64
        }
    }
}

/// Outcome of one validation trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTrial {
    pub residual: f64,
    pub v_energy: f64,
    pub mu_v: f64,
    pub params: BoundParams,
}

impl BoundTrial {
    pub fn held(&self) -> Option<bool> {
        let lower = self.params.lower_factor?;
        Some(lower * self.v_energy <= self.residual && self.residual <= self.params.upper_factor * self.v_energy)
    }
}

/// Runs one trial: a block basis with coherence `mu0` under a random row
/// permutation, `x` Gaussian in the span, `v` Gaussian projected onto the
/// complement, and a fresh index list of size `m`.
pub fn projection_bound_trial(
    d: usize,
    r: usize,
    mu0: f64,
    m: usize,
    delta: f64,
    rng: &mut Rng,
) -> Result<BoundTrial> {
    let (base, _) = block_basis(d, r, mu0)?;
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let basis = OrthoBasis { columns: subsample_rows(&base, &perm) };
    let mu_u = subspace_coherence(&basis)?;

    let coeffs = DVector::from_fn(r, |_, _| StandardNormal.sample(rng));
    let x = basis.columns() * coeffs;
    let mut v = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    for _ in 0..2 {
        v -= basis.project(&v);
    }
    let y = x + &v;
    let omega = draw_indices(d, m, rng)?;
    let y_omega = DVector::from_iterator(m, omega.entries().iter().map(|&i| y[i]));
    let report = SubsampledProjector::new(&basis, &omega)?.residual(&y_omega)?;
    let mu_v = vector_coherence(&v)?;
    let params = theorem3_bounds(m, d, r, mu_u, mu_v, delta)?;
    Ok(BoundTrial { residual: report.energy, v_energy: v.norm_squared(), mu_v, params })
}

/// Fraction of trials in which both sides of the residual bound hold.
///
/// Trials are independent and run in parallel; trial `i` uses a stream
/// derived from one base seed drawn from `rng`, so the result does not depend
/// on the number of threads.
pub fn validate_projection_bounds(
    d: usize,
    r: usize,
    mu0: f64,
    m: usize,
    delta: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    if m == 0 || m > d {
        return Err(invalid(format!("m must lie in [1, d], got m={m}, d={d}")));
    }
    let (base, _) = block_basis(d, r, mu0)?;
    let mu_u = subspace_coherence(&OrthoBasis { columns: base })?;
    let params = theorem3_bounds(m, d, r, mu_u, 0.0, delta)?;
    if !params.valid {
        return Err(invalid(format!(
            "m = {m} violates the precondition m >= (8/3) r mu(U) log(2d/delta) with gamma < 1 (gamma = {:.4})",
            params.gamma
        )));
    }
    let seed = rng::split(rng);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| projection_bound_trial(d, r, mu0, m, delta, &mut rng::derive(seed, &[t as u64])))
        .collect::<Result<Vec<_>>>()?;
    let evaluated = outcomes.iter().filter(|o| o.held().is_some()).count();
    let held = outcomes.iter().filter(|o| o.held() == Some(true)).count();
    Ok(CoverageReport { trials, evaluated, held })
}
