//! Synthetic low-rank instances with controlled coherence, the hard family
//! that defeats passive sampling, and the coherence measures themselves.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal, Uniform};

use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::subspace::OrthoBasis;

/// How the row factors (right singular structure) are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowMode {
    /// i.i.d. standard Gaussian coefficients: an incoherent row space.
    Gaussian,
    /// i.i.d. random signs. Columns are then constant in magnitude on the
    /// support of the block basis.
    Sign,
    /// `r` distinct random standard basis vectors of `R^n`: a maximally
    /// coherent row space where only `r` columns are nonzero.
    CoherentBasis,
}

/// Target distribution of the column norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnNorms {
    /// Every nonzero column rescaled to unit norm.
    Constant,
    /// Norms uniform on `[0.9, 1.1]`.
    Uniform,
    /// Norms from a standard log-normal distribution.
    LogNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub mu0: f64,
    pub row_mode: RowMode,
    pub column_norms: ColumnNorms,
    /// Additive Gaussian noise with per-entry variance `σ² / (d n)`, so that
    /// `‖R‖_F ≈ σ` whatever the size of the matrix.
    pub noise_sigma: f64,
}

impl InstanceSpec {
    pub fn new(d: usize, n: usize, r: usize, mu0: f64) -> Self {
        Self {
            d,
            n,
            r,
            mu0,
            row_mode: RowMode::Gaussian,
            column_norms: ColumnNorms::Constant,
            noise_sigma: 0.0,
        }
    }

    pub fn with_row_mode(mut self, row_mode: RowMode) -> Self {
        self.row_mode = row_mode;
        self
    }

    pub fn with_column_norms(mut self, column_norms: ColumnNorms) -> Self {
        self.column_norms = column_norms;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.r == 0 {
            return Err(invalid("d, n and r must all be positive"));
        }
        if self.d > self.n {
            return Err(invalid(format!("instances require d <= n (got d={}, n={})", self.d, self.n)));
        }
        if self.r > self.d {
            return Err(invalid(format!("rank {} exceeds d = {}", self.r, self.d)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise sigma must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Recorded when the requested coherence could not be met exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecAdjustment {
    pub requested_mu0: f64,
    pub realized_mu0: f64,
    pub block_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    /// The observed matrix `X = A + R`.
    pub matrix: DMatrix<f64>,
    /// The low-rank part `A`; equal to `matrix` when there is no noise.
    pub low_rank_part: DMatrix<f64>,
    pub true_rank: usize,
    /// Orthonormal basis of the column space of `A`.
    pub column_space: OrthoBasis,
    pub realized_mu0: f64,
    pub realized_column_mu: f64,
    pub adjustment: Option<SpecAdjustment>,
}

/// Layout of the indicator blocks spanning a coherence-controlled subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub block_len: usize,
    pub last_block_len: usize,
    pub covered_rows: usize,
}

/// `r` orthonormal indicator vectors, each constant on a contiguous block of
/// `l = d / (r μ₀)` rows, the remaining rows zero. This gives `μ(U) = μ₀`
/// when `l` is an integer. Otherwise blocks have `⌊l⌋` rows, the last one
/// absorbing the remainder, and the realized coherence is slightly higher.
pub fn block_basis(d: usize, r: usize, mu0: f64) -> Result<(DMatrix<f64>, BlockLayout)> {
    if r == 0 || r > d {
        return Err(invalid(format!("rank must lie in [1, d], got r={r}, d={d}")));
    }
    let max_mu = d as f64 / r as f64;
    if !(mu0 >= 1.0 && mu0 <= max_mu * (1.0 + 1e-12)) {
        return Err(invalid(format!("mu0 must lie in [1, d/r] = [1, {max_mu}], got {mu0}")));
    }
    let ideal = d as f64 / (r as f64 * mu0);
    let block_len = ((ideal + 1e-9).floor() as usize).max(1);
    let covered_rows = ((d as f64 / mu0 + 1e-9).floor() as usize).clamp(r * block_len, d);
    let last_block_len = covered_rows - (r - 1) * block_len;
    let mut u = DMatrix::zeros(d, r);
    for k in 0..r {
        let len = if k + 1 == r { last_block_len } else { block_len };
        let value = 1.0 / (len as f64).sqrt();
        for i in k * block_len..k * block_len + len {
            u[(i, k)] = value;
        }
    }
    Ok((u, BlockLayout { block_len, last_block_len, covered_rows }))
}

/// `μ(U) = (d/k) max_i ‖P_U e_i‖²`, computed from the row norms of an
/// orthonormal basis.
pub fn subspace_coherence(basis: &OrthoBasis) -> Result<f64> {
    let k = basis.dim();
    if k == 0 {
        return Err(invalid("coherence of the zero subspace is undefined"));
    }
    let u = basis.columns();
    let max_row = u.row_iter().map(|row| row.norm_squared()).fold(0.0, f64::max);
    Ok(basis.ambient() as f64 / k as f64 * max_row)
}

/// `μ(v) = d ‖v‖∞² / ‖v‖²`.
pub fn vector_coherence(v: &DVector<f64>) -> Result<f64> {
    let energy = v.norm_squared();
    if energy == 0.0 {
        return Err(invalid("coherence of the zero vector is undefined"));
    }
    Ok(v.len() as f64 * v.amax().powi(2) / energy)
}

/// Maximal column coherence `max_t d ‖x_t‖∞² / ‖x_t‖²`. Zero columns are
/// skipped.
pub fn column_coherence(x: &DMatrix<f64>) -> Result<f64> {
    let (best, zero) = coherence_of_nonzero_columns(x);
    if zero > 0 && best.is_some() {
        log::warn!("column coherence: skipped {zero} all-zero columns");
    }
    best.ok_or_else(|| invalid("column coherence needs at least one nonzero column"))
}

// Max column coherence over nonzero columns, and the number of zero columns.
fn coherence_of_nonzero_columns(x: &DMatrix<f64>) -> (Option<f64>, usize) {
    let d = x.nrows() as f64;
    let mut zero = 0usize;
    let mut best: Option<f64> = None;
    for col in x.column_iter() {
        let energy = col.norm_squared();
        if energy == 0.0 {
            zero += 1;
            continue;
        }
        let mu = d * col.amax().powi(2) / energy;
        best = Some(best.map_or(mu, |b: f64| b.max(mu)));
    }
    (best, zero)
}

// Generators expect zero columns (coherent row spaces, the hard family), so
// they skip them quietly.
fn generated_column_coherence(x: &DMatrix<f64>) -> Result<f64> {
    coherence_of_nonzero_columns(x).0.ok_or_else(|| invalid("generated matrix is zero"))
}

fn row_factors(spec: &InstanceSpec, rng: &mut Rng) -> DMatrix<f64> {
    let (r, n) = (spec.r, spec.n);
    match spec.row_mode {
        RowMode::Gaussian => DMatrix::from_fn(r, n, |_, _| StandardNormal.sample(rng)),
        RowMode::Sign => DMatrix::from_fn(r, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }),
        RowMode::CoherentBasis => {
            let mut w = DMatrix::zeros(r, n);
            for (k, j) in sample_indices(rng, n, r).into_iter().enumerate() {
                w[(k, j)] = 1.0;
            }
            w
        }
    }
}

fn scale_columns(a: &mut DMatrix<f64>, mode: ColumnNorms, rng: &mut Rng) {
    let uniform = Uniform::new_inclusive(0.9, 1.1).expect("valid range");
    let lognormal = LogNormal::new(0.0, 1.0).expect("valid parameters");
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        // Draw for every column so the stream does not depend on which
        // columns happen to be zero.
        let target = match mode {
            ColumnNorms::Constant => 1.0,
            ColumnNorms::Uniform => uniform.sample(rng),
            ColumnNorms::LogNormal => lognormal.sample(rng),
        };
        if norm > 0.0 {
            col *= target / norm;
        }
    }
}

/// Draws a rank-`r` instance whose column space is spanned by indicator
/// blocks with coherence `μ₀`.
pub fn make_low_rank(spec: &InstanceSpec, rng: &mut Rng) -> Result<GeneratedInstance> {
    spec.validate()?;
    let (u, layout) = block_basis(spec.d, spec.r, spec.mu0)?;
    let column_space = OrthoBasis::from_orthonormal(u)?;
    let realized_mu0 = subspace_coherence(&column_space)?;
    let adjustment = ((realized_mu0 - spec.mu0).abs() > 1e-9 * spec.mu0).then(|| {
        let adj = SpecAdjustment { requested_mu0: spec.mu0, realized_mu0, block_len: layout.block_len };
        log::debug!(
            "block length d/(r mu0) = {} is not an integer; using {} (realized mu0 = {realized_mu0})",
            spec.d as f64 / (spec.r as f64 * spec.mu0),
            layout.block_len
        );
        adj
    });

    let w = row_factors(spec, rng);
    let mut a = column_space.columns() * w;
    scale_columns(&mut a, spec.column_norms, rng);

    let matrix = if spec.noise_sigma > 0.0 {
        let sd = spec.noise_sigma / ((spec.d * spec.n) as f64).sqrt();
        let noise = Normal::new(0.0, sd).map_err(|e| invalid(e.to_string()))?;
        a.map(|v| v + noise.sample(rng))
    } else {
        a.clone()
    };
    let realized_column_mu = generated_column_coherence(&matrix)?;
    Ok(GeneratedInstance {
        matrix,
        low_rank_part: a,
        true_rank: spec.r,
        column_space,
        realized_mu0,
        realized_column_mu,
        adjustment,
    })
}

/// The family of rank-`r` matrices used to show that passive sampling needs
/// nearly all entries.
///
/// The first `r−1` left singular vectors are constant on consecutive blocks
/// of `l = d/(r μ₀)` rows and sit in columns `0..r−1`. The last one has
/// magnitude `1/√l` on a hidden set of `l` rows drawn from the remaining
/// `d − (r−1) l` rows, with hidden signs, and sits in one hidden column among
/// `r−1..n`. All singular values are one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerBoundFamily {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub block_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundInstance {
    pub instance: GeneratedInstance,
    pub hidden_column: usize,
    pub hidden_support: Vec<usize>,
    pub hidden_signs: Vec<f64>,
}

impl LowerBoundFamily {
    pub fn new(d: usize, n: usize, r: usize, mu0: f64) -> Result<Self> {
        if r == 0 || n <= r {
            return Err(invalid(format!("the hard family needs 1 <= r < n (got r={r}, n={n})")));
        }
        if !(mu0 >= 1.0) {
            return Err(invalid(format!("mu0 must be at least 1, got {mu0}")));
        }
        let l = d as f64 / (r as f64 * mu0);
        let block_len = l.round() as usize;
        if block_len == 0 || (l - block_len as f64).abs() > 1e-9 {
            return Err(invalid(format!("d/(r mu0) = {l} must be a positive integer")));
        }
        if r * block_len > d {
            return Err(invalid("blocks do not fit in d rows"));
        }
        Ok(Self { d, n, r, block_len })
    }

    /// First row available for the hidden support.
    pub fn free_start(&self) -> usize {
        (self.r - 1) * self.block_len
    }

    /// Number of rows the hidden support is drawn from, `d c₁`.
    pub fn free_rows(&self) -> usize {
        self.d - self.free_start()
    }

    /// Columns that may hold the hidden direction.
    pub fn hidden_columns(&self) -> std::ops::Range<usize> {
        self.r - 1..self.n
    }

    /// Builds the family member with the given hidden column, support rows
    /// and signs.
    pub fn member(&self, hidden_column: usize, support: &[usize], signs: &[f64]) -> Result<DMatrix<f64>> {
        if !self.hidden_columns().contains(&hidden_column) {
            return Err(invalid(format!("hidden column {hidden_column} outside {:?}", self.hidden_columns())));
        }
        if support.len() != self.block_len || signs.len() != self.block_len {
            return Err(invalid(format!("hidden support must have exactly {} rows", self.block_len)));
        }
        if support.iter().any(|&i| i < self.free_start() || i >= self.d) {
            return Err(invalid("hidden support must lie in the free rows"));
        }
        let value = 1.0 / (self.block_len as f64).sqrt();
        let mut x = DMatrix::zeros(self.d, self.n);
        for k in 0..self.r - 1 {
            for i in k * self.block_len..(k + 1) * self.block_len {
                x[(i, k)] = value;
            }
        }
        for (&i, &s) in support.iter().zip(signs) {
            x[(i, hidden_column)] = s * value;
        }
        Ok(x)
    }

    /// Draws a member uniformly: hidden column, support and signs.
    pub fn sample(&self, rng: &mut Rng) -> Result<LowerBoundInstance> {
        let hidden_column = rng.random_range(self.hidden_columns());
        let mut hidden_support: Vec<usize> = sample_indices(rng, self.free_rows(), self.block_len)
            .into_iter()
            .map(|i| i + self.free_start())
            .collect();
        hidden_support.sort_unstable();
        let hidden_signs: Vec<f64> =
            (0..self.block_len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let matrix = self.member(hidden_column, &hidden_support, &hidden_signs)?;

        let value = 1.0 / (self.block_len as f64).sqrt();
        let mut u = DMatrix::zeros(self.d, self.r);
        for k in 0..self.r - 1 {
            for i in k * self.block_len..(k + 1) * self.block_len {
                u[(i, k)] = value;
            }
        }
        for (&i, &s) in hidden_support.iter().zip(&hidden_signs) {
            u[(i, self.r - 1)] = s * value;
        }
        let column_space = OrthoBasis::from_orthonormal(u)?;
        let realized_mu0 = subspace_coherence(&column_space)?;
        let realized_column_mu = generated_column_coherence(&matrix)?;
        let instance = GeneratedInstance {
            low_rank_part: matrix.clone(),
            matrix,
            true_rank: self.r,
            column_space,
            realized_mu0,
            realized_column_mu,
            adjustment: None,
        };
        Ok(LowerBoundInstance { instance, hidden_column, hidden_support, hidden_signs })
    }
}

/// Draws one member of the hard family.
pub fn make_lower_bound_instance(d: usize, n: usize, r: usize, mu0: f64, rng: &mut Rng) -> Result<LowerBoundInstance> {
    LowerBoundFamily::new(d, n, r, mu0)?.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rank_one_constant_direction() {
        let inst = make_low_rank(&InstanceSpec::new(8, 10, 1, 1.0), &mut seeded(1)).unwrap();
        assert!((inst.realized_mu0 - 1.0).abs() < 1e-12);
        let u = inst.column_space.columns();
        assert!(u.iter().all(|&v| (v - 1.0 / 8f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn rank_one_spike_direction() {
        let inst = make_low_rank(&InstanceSpec::new(8, 10, 1, 8.0), &mut seeded(1)).unwrap();
        assert!((inst.realized_mu0 - 8.0).abs() < 1e-12);
        assert_eq!(inst.column_space.columns().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn non_integral_block_length_is_recorded() {
        let inst = make_low_rank(&InstanceSpec::new(500, 500, 10, 4.0), &mut seeded(2)).unwrap();
        let adj = inst.adjustment.expect("12.5-row blocks cannot be exact");
        assert_eq!(adj.block_len, 12);
        assert!((inst.realized_mu0 - 500.0 / (10.0 * 12.0)).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs() {
        assert!(make_low_rank(&InstanceSpec::new(10, 5, 2, 1.0), &mut seeded(0)).is_err());
        assert!(make_low_rank(&InstanceSpec::new(10, 10, 2, 6.0), &mut seeded(0)).is_err());
        assert!(make_low_rank(&InstanceSpec::new(10, 10, 0, 1.0), &mut seeded(0)).is_err());
    }

    #[test]
    fn coherent_rows_leave_r_nonzero_columns() {
        let spec = InstanceSpec::new(20, 30, 3, 1.0).with_row_mode(RowMode::CoherentBasis);
        let inst = make_low_rank(&spec, &mut seeded(4)).unwrap();
        let nonzero = inst.matrix.column_iter().filter(|c| c.norm() > 0.0).count();
        assert_eq!(nonzero, 3);
    }

    #[test]
    fn sign_rows_give_flat_columns() {
        let spec = InstanceSpec::new(40, 40, 4, 1.0).with_row_mode(RowMode::Sign);
        let inst = make_low_rank(&spec, &mut seeded(6)).unwrap();
        assert!((inst.realized_column_mu - 1.0).abs() < 1e-9);
        for col in inst.matrix.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_matches_requested_scale() {
        let spec = InstanceSpec::new(200, 200, 5, 1.0).with_noise(0.5);
        let inst = make_low_rank(&spec, &mut seeded(9)).unwrap();
        let noise = &inst.matrix - &inst.low_rank_part;
        assert!((noise.norm() - 0.5).abs() < 0.02, "noise norm {}", noise.norm());
    }

    #[test]
    fn coherence_formulas() {
        let mut e = DMatrix::zeros(10, 1);
        e[(3, 0)] = 1.0;
        assert_eq!(subspace_coherence(&OrthoBasis::from_orthonormal(e).unwrap()).unwrap(), 10.0);
        let flat = DMatrix::from_element(10, 1, 1.0 / 10f64.sqrt());
        let mu = subspace_coherence(&OrthoBasis::from_orthonormal(flat).unwrap()).unwrap();
        assert!((mu - 1.0).abs() < 1e-12);
        assert!(subspace_coherence(&OrthoBasis::empty(10)).is_err());
    }

    #[test]
    fn column_coherence_cases() {
        let flat = DMatrix::from_element(6, 1, -2.0);
        assert!((column_coherence(&flat).unwrap() - 1.0).abs() < 1e-12);
        let mut spike = DMatrix::zeros(6, 2);
        spike[(4, 1)] = 3.0;
        assert_eq!(column_coherence(&spike).unwrap(), 6.0);
        assert!(column_coherence(&DMatrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn lower_bound_family_shape() {
        let fam = LowerBoundFamily::new(100, 200, 5, 5.0).unwrap();
        assert_eq!(fam.block_len, 4);
        assert_eq!(fam.free_rows(), 84);
        let inst = fam.sample(&mut seeded(12)).unwrap();
        assert!(inst.instance.realized_mu0 <= 5.0 + 1e-9);
        assert!(fam.hidden_columns().contains(&inst.hidden_column));
        assert!(inst.hidden_support.iter().all(|&i| i >= 16));
        assert!(LowerBoundFamily::new(100, 200, 5, 3.0).is_err());
        assert!(LowerBoundFamily::new(10, 3, 3, 1.0).is_err());
    }

    #[test]
    fn lower_bound_rank_one_is_a_single_spike_column() {
        let inst = make_lower_bound_instance(12, 5, 1, 3.0, &mut seeded(3)).unwrap();
        let nonzero: Vec<usize> =
            (0..5).filter(|&j| inst.instance.matrix.column(j).norm() > 0.0).collect();
        assert_eq!(nonzero, vec![inst.hidden_column]);
        assert_eq!(inst.instance.matrix.column(inst.hidden_column).iter().filter(|&&v| v != 0.0).count(), 4);
    }
}
