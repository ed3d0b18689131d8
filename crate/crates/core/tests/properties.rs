use amc_core::instances::{column_coherence, subspace_coherence, vector_coherence};
use amc_core::linalg::{singular_values, spectral_norm, tail_energy, truncate_to_rank};
use amc_core::metrics::{error_report, error_report_within, TruthSpectrum};
use amc_core::rng::seeded;
use amc_core::sampling::{draw_indices, subsample_vector, IndexList, RescaledSketchVector};
use amc_core::subspace::{residual_energy, OrthoBasis};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn gaussian(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    DMatrix::from_fn(d, n, |_, _| rng.sample(StandardNormal))
}

fn random_basis(d: usize, k: usize, seed: u64) -> OrthoBasis {
    OrthoBasis::orthonormalize(&gaussian(d, k, seed), 1e-10)
}

fn low_rank(d: usize, n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    gaussian(d, r, seed) * gaussian(r, n, seed ^ 0x9e37)
}

/// Largest singular value by power iteration on `AᵀA`.
fn power_iteration(a: &DMatrix<f64>, iters: usize) -> f64 {
    let ata = a.transpose() * a;
    let mut v = DVector::from_element(a.ncols(), 1.0).normalize();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = &ata * &v;
        lambda = v.dot(&w);
        v = w.normalize();
    }
    lambda.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subsample_energy_is_bounded_by_coherence(d in 2usize..60, m in 1usize..80, seed in any::<u64>()) {
        let x = gaussian(d, 1, seed).column(0).into_owned();
        let omega = draw_indices(d, m, &mut seeded(seed ^ 1)).unwrap();
        let x_omega = subsample_vector(&x, &omega).unwrap();
        let mu = vector_coherence(&x).unwrap();
        prop_assert!(x_omega.norm_squared() <= m as f64 / d as f64 * mu * x.norm_squared() * (1.0 + 1e-12));
    }

    #[test]
    fn rescale_is_linear(d in 1usize..40, m in 1usize..50, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let xy = gaussian(d, 2, seed);
        let (x, y) = (xy.column(0).into_owned(), xy.column(1).into_owned());
        let omega = draw_indices(d, m, &mut seeded(seed ^ 2)).unwrap();
        let rescale = |v: &DVector<f64>| {
            let s = subsample_vector(v, &omega).unwrap();
            RescaledSketchVector::from_samples(&omega, s.as_slice()).unwrap().into_values()
        };
        let lhs = rescale(&(&x * a + &y * b));
        let rhs = rescale(&x) * a + rescale(&y) * b;
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn residual_never_exceeds_probe_energy(d in 4usize..50, k in 1usize..4, m in 1usize..60, seed in any::<u64>()) {
        let k = k.min(d - 1);
        let basis = random_basis(d, k, seed);
        let x = gaussian(d, 1, seed ^ 3).column(0).into_owned();
        let omega = draw_indices(d, m, &mut seeded(seed ^ 4)).unwrap();
        let x_omega = subsample_vector(&x, &omega).unwrap();
        let u_omega = DMatrix::from_fn(m, k, |i, j| basis.columns()[(omega.entries()[i], j)]);
        let rep = residual_energy(&x_omega, &u_omega).unwrap();
        prop_assert!(rep.energy >= 0.0);
        prop_assert!(rep.energy <= x_omega.norm_squared() * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn subspace_coherence_lies_between_one_and_d_over_r(d in 2usize..80, r in 1usize..6, seed in any::<u64>()) {
        let r = r.min(d);
        let basis = random_basis(d, r, seed);
        let mu = subspace_coherence(&basis).unwrap();
        prop_assert!(mu >= 1.0 - 1e-9 && mu <= d as f64 / r as f64 + 1e-9);
    }

    #[test]
    fn truncation_error_is_the_singular_value_tail(d in 2usize..30, n in 2usize..30, r in 0usize..6, seed in any::<u64>()) {
        let a = gaussian(d, n, seed);
        let r = r.min(d.min(n));
        let t = truncate_to_rank(&a, r);
        let err = (&a - &t).norm();
        let tail = tail_energy(&singular_values(&a), r);
        prop_assert!((err - tail).abs() <= 1e-10 * (1.0 + a.norm()));
        // No other rank-r matrix does better; try a random one through the same span.
        let other = truncate_to_rank(&(&a + gaussian(d, n, seed ^ 5) * 0.1), r);
        prop_assert!(err <= (&a - other).norm() + 1e-10);
    }

    #[test]
    fn column_coherence_matches_brute_force(d in 1usize..30, n in 1usize..10, seed in any::<u64>()) {
        let x = gaussian(d, n, seed);
        let brute = x
            .column_iter()
            .map(|c| d as f64 * c.amax().powi(2) / c.norm_squared())
            .fold(0.0, f64::max);
        prop_assert!((column_coherence(&x).unwrap() - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn error_report_routes_agree(d in 3usize..25, n in 3usize..25, r in 1usize..3, seed in any::<u64>()) {
        let truth = low_rank(d, n, r, seed);
        let estimate = &truth + gaussian(d, n, seed ^ 6) * 1e-3;
        let full = error_report(&truth, &estimate, r).unwrap();
        let span = OrthoBasis::orthonormalize(&truth, 1e-10);
        let spectrum = TruthSpectrum::within(&truth, &span);
        let via_span = error_report_within(&truth, &spectrum, &estimate, r, 1e-9, &span).unwrap();
        // Independent dense route.
        let diff = &truth - &estimate;
        prop_assert!((full.frob_error - diff.norm()).abs() <= 1e-12 * (1.0 + diff.norm()));
        prop_assert!((full.spectral_error - power_iteration(&diff, 3000)).abs() <= 1e-6 * full.spectral_error);
        prop_assert!((full.excess_risk_eps - via_span.excess_risk_eps).abs() <= 1e-10);
        prop_assert!(full.excess_risk_eps >= -1e-10);
        prop_assert!((full.spectral_error - via_span.spectral_error).abs() <= 1e-12 * (1.0 + full.spectral_error));
    }

    #[test]
    fn index_lists_stay_in_range(d in 1usize..100, m in 1usize..200, seed in any::<u64>()) {
        let omega = draw_indices(d, m, &mut seeded(seed)).unwrap();
        prop_assert_eq!(omega.len(), m);
        prop_assert!(omega.entries().iter().all(|&i| i < d));
        prop_assert!(omega.distinct() <= m.min(d));
        prop_assert!(IndexList::new(omega.entries().to_vec(), d).is_ok());
    }
}

#[test]
fn spectral_norm_matches_power_iteration() {
    for seed in 0..3 {
        let a = gaussian(200, 200, 100 + seed);
        let ours = spectral_norm(&a);
        let oracle = power_iteration(&a, 20_000);
        assert!((ours - oracle).abs() <= 1e-6 * ours, "seed {seed}: {ours} vs {oracle}");
    }
}

#[test]
fn spectral_norm_of_low_rank_product() {
    let a = low_rank(200, 200, 5, 7);
    let ours = spectral_norm(&a);
    assert!((ours - power_iteration(&a, 2000)).abs() <= 1e-6 * ours);
}
