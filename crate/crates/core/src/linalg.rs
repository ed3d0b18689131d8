//! Deterministic SVD helpers. Factorizations run through faer; matrices stay
//! in nalgebra form at the interface.
//!
//! Singular values come out nonincreasing, and each left singular vector is
//! flipped so that its first nonzero component is positive (with the matching
//! right vector flipped too). For a fixed input the factors are therefore
//! reproducible bit for bit.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    /// Thin SVD: `u` is `d × p`, `v_t` is `p × n` with `p = min(d, n)`.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (mut u, s, mut v_t) = thin_svd(a);

        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        if order.iter().enumerate().any(|(k, &i)| k != i) {
            u = DMatrix::from_fn(u.nrows(), order.len(), |i, k| u[(i, order[k])]);
            v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |k, j| v_t[(order[k], j)]);
        }
        let singular_values = DVector::from_iterator(order.len(), order.iter().map(|&i| s[i]));

        for k in 0..singular_values.len() {
            let flip = u.column(k).iter().find(|v| **v != 0.0).is_some_and(|&v| v < 0.0);
            if flip {
                u.column_mut(k).neg_mut();
                v_t.row_mut(k).neg_mut();
            }
        }
        Self { u, singular_values, v_t }
    }

    /// `Σ_{i<r} σ_i u_i v_iᵀ`, with `r` clamped to the number of triplets.
    pub fn reconstruct(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(self.singular_values.len());
        let (d, n) = (self.u.nrows(), self.v_t.ncols());
        if r == 0 {
            return DMatrix::zeros(d, n);
        }
        let mut left = self.u.columns(0, r).into_owned();
        for k in 0..r {
            left.column_mut(k).scale_mut(self.singular_values[k]);
        }
        left * self.v_t.rows(0, r)
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

type Factors = (faer::Mat<f64>, Vec<f64>, faer::Mat<f64>);

fn direct(m: faer::MatRef<'_, f64>) -> Option<Factors> {
    let svd = m.thin_svd().ok()?;
    let s = (0..svd.S().dim()).map(|k| svd.S()[k]).collect();
    Some((svd.U().to_owned(), s, svd.V().to_owned()))
}

// The bidiagonal iteration can spin for tens of seconds and then give up on
// exactly rank-deficient inputs with repeated rows, which generated
// instances have. Decomposing the R factor of a QR of the tall orientation
// avoids that; the direct call is only a fallback.
fn robust_svd(m: &faer::Mat<f64>) -> Factors {
    if m.nrows() < m.ncols() {
        let (u, s, v) = robust_svd(&m.transpose().to_owned());
        return (v, s, u);
    }
    let qr = m.qr();
    if let Some((u_r, s, v)) = direct(qr.thin_R()) {
        return (qr.compute_thin_Q() * u_r, s, v);
    }
    log::debug!("SVD through QR of a {}x{} matrix did not converge; retrying directly", m.nrows(), m.ncols());
    direct(m.as_ref()).unwrap_or_else(|| panic!("SVD of a {}x{} matrix did not converge", m.nrows(), m.ncols()))
}

fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (d, n) = a.shape();
    let p = d.min(n);
    if p == 0 {
        return (DMatrix::zeros(d, 0), DVector::zeros(0), DMatrix::zeros(0, n));
    }
    let (fu, fs, fv) = robust_svd(&to_faer(a));
    let u = DMatrix::from_fn(d, p, |i, k| fu[(i, k)]);
    let s = DVector::from_vec(fs);
    let v_t = DMatrix::from_fn(p, n, |k, j| fv[(j, k)]);
    (u, s, v_t)
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    let m = to_faer(a);
    let tall = if m.nrows() < m.ncols() { m.transpose().to_owned() } else { m };
    let r = tall.qr().thin_R().to_owned();
    let mut s = r.singular_values().unwrap_or_else(|_| robust_svd(&tall).1);
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).iter().copied().fold(0.0, f64::max)
}

/// `√(Σ_{i≥r} σ_i²)`: the Frobenius distance to the best rank-`r` matrix.
pub fn tail_energy(singular_values: &DVector<f64>, r: usize) -> f64 {
    singular_values.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt()
}

/// Best rank-`r` approximation in Frobenius norm. `r = 0` gives the zero
/// matrix; `r` beyond `min(d, n)` keeps every triplet.
pub fn truncate_to_rank(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    if r == 0 || a.is_empty() {
        return DMatrix::zeros(a.nrows(), a.ncols());
    }
    Svd::new(a).reconstruct(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_truncation() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let t = truncate_to_rank(&a, 2);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        assert!((t - expect).amax() < 1e-14);
    }

    #[test]
    fn zero_rank_and_full_rank() {
        let a = DMatrix::from_fn(5, 7, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        assert_eq!(truncate_to_rank(&a, 0), DMatrix::zeros(5, 7));
        let full = truncate_to_rank(&a, 5);
        assert!((full - &a).norm() <= 1e-10 * a.norm());
        let beyond = truncate_to_rank(&a, 50);
        assert!((beyond - &a).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn rank_deficient_input_that_stalls_the_direct_path() {
        let spec = crate::instances::InstanceSpec::new(500, 500, 10, 1.0);
        let a = crate::instances::make_low_rank(&spec, &mut crate::rng::derive(11, &[27, 0])).unwrap().matrix;
        let svd = Svd::new(&a);
        assert!((svd.reconstruct(500) - &a).norm() < 1e-12 * a.norm());
        assert!((svd.u.transpose() * &svd.u - DMatrix::identity(500, 500)).amax() < 1e-12);
        let sv = singular_values(&a);
        assert!(sv.iter().skip(10).all(|&s| s < 1e-12 * sv[0]));
        assert!((&sv - &svd.singular_values).amax() < 1e-12 * sv[0]);
    }

    #[test]
    fn clustered_spectrum_is_exact() {
        // Rows of a block-constant basis with repeats: a case that defeats
        // some bidiagonal QR implementations.
        let rows = [0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4, 4, 4, 0, 1, 2, 3];
        let a = DMatrix::from_fn(rows.len(), 5, |i, j| if rows[i] == j { 0.5 } else { 0.0 });
        let svd = Svd::new(&a);
        assert!((svd.reconstruct(5) - &a).amax() < 1e-14);
        let expect = [5.0f64, 4.0, 4.0, 4.0, 3.0].map(|c| 0.5 * c.sqrt());
        for (s, e) in svd.singular_values.iter().zip(expect) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn sign_convention_and_order() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i + 1) as f64).sin() * (j as f64 + 0.5) + (i * j) as f64 * 0.1);
        let svd = Svd::new(&a);
        for w in svd.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for k in 0..svd.singular_values.len() {
            let first = svd.u.column(k).iter().copied().find(|v| *v != 0.0).unwrap();
            assert!(first > 0.0);
        }
        let again = Svd::new(&a);
        assert_eq!(svd.u, again.u);
        assert_eq!(svd.v_t, again.v_t);
    }
}
