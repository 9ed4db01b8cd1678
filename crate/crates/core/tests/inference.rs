use hdiv::inference::normal::two_sided_pvalue;
use hdiv::inference::{compute_residuals, fit_inverse_regression, run_inference, test_statistic, DeltaChoice, InferenceOptions};
use hdiv::simgen::{gen_dataset, SimConfig};
use hdiv::solver::{scaled_lasso, ScaledPenalty};
use hdiv::two_stage::{fit_first_stage, fit_second_stage, Tuning};
use hdiv::{DenseMatrix, RealVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

#[test]
fn permuting_coordinates_permutes_statistics() {
    let (ds, _) = gen_dataset(&SimConfig { s1: 3, s2: 4, ..SimConfig::new(120, 10, 15, 41) }).unwrap();
    let first = fit_first_stage(&ds, &Tuning::default()).unwrap();
    let beta = fit_second_stage(&ds.y, &first.d_hat, &Tuning::default()).unwrap().beta_hat;
    let perm = [7usize, 2, 9, 0, 4, 1, 8, 3, 6, 5];
    let d_perm = first.d_hat.select_columns(perm.iter());
    let b_perm = RealVector::from_iterator(10, perm.iter().map(|&j| beta[j]));
    for delta in [DeltaChoice::Fixed(1), DeltaChoice::Fixed(30)] {
        let options = InferenceOptions { delta, ..Default::default() };
        let a = run_inference(&ds.y, &first.d_hat, &beta, &options).unwrap();
        let b = run_inference(&ds.y, &d_perm, &b_perm, &options).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            // the coordinate order of descent differs, so agreement is up to solver tolerance
            assert!((b.t[k] - a.t[j]).abs() <= 1e-5, "T {k}: {} vs {}", b.t[k], a.t[j]);
            assert!((b.t_hat[k] - a.t_hat[j]).abs() <= 1e-5);
            assert!((b.pvalues[k] - a.pvalues[j]).abs() <= 1e-5);
        }
    }
}

#[test]
fn statistic_is_invariant_to_response_scale() {
    // n = 50, p = 4: near-zero inverse-regression penalty so that refitting on
    // c·Y rescales θ̂_Y by exactly 1/c
    let n = 50;
    let d = gaussian(n, 4, 50);
    let y: RealVector = d.column(0).scale(0.8) + gaussian(n, 1, 51).column(0);
    let c = 7.5;
    let y_scaled = y.scale(c);
    let beta = scaled_lasso(&y, &d, ScaledPenalty::Quantile).unwrap().coefficients;
    let beta_scaled = scaled_lasso(&y_scaled, &d, ScaledPenalty::Quantile).unwrap().coefficients;
    assert!((beta_scaled.clone() - beta.scale(c)).amax() <= 1e-5);
    for i in 0..4 {
        let stat = |y: &RealVector, beta: &RealVector| {
            let fit = fit_inverse_regression(i, y, &d, 1e-12).unwrap();
            let res = compute_residuals(i, y, &d, beta, &fit).unwrap();
            test_statistic(&res, beta[i], fit.response_coefficient(), n).unwrap()
        };
        let (t, t_hat) = stat(&y, &beta);
        let (t2, t_hat2) = stat(&y_scaled, &beta_scaled);
        assert!((t - t2).abs() <= 1e-6 && (t_hat - t_hat2).abs() <= 1e-6, "coordinate {i}: {t_hat} vs {t_hat2}");
    }
}

#[test]
fn exactly_rescaled_residuals_give_the_same_statistic() {
    let n = 50;
    let d = gaussian(n, 3, 60);
    let y: RealVector = gaussian(n, 1, 61).column(0) + d.column(1);
    let beta = RealVector::from_vec(vec![0.1, 0.9, -0.05]);
    let fit = fit_inverse_regression(1, &y, &d, 0.05).unwrap();
    let res = compute_residuals(1, &y, &d, &beta, &fit).unwrap();
    let (_, t_hat) = test_statistic(&res, beta[1], fit.response_coefficient(), n).unwrap();
    for c in [0.01, 3.0, 250.0] {
        let mut scaled = res.clone();
        scaled.xi = res.xi.scale(c);
        scaled.sigma2_xi = res.sigma2_xi * c * c;
        let (_, t_hat_c) = test_statistic(&scaled, c * beta[1], fit.response_coefficient() / c, n).unwrap();
        assert!((t_hat - t_hat_c).abs() <= 1e-6 * (1.0 + t_hat.abs()));
    }
}

#[test]
fn pvalues_are_valid_and_match_statistics() {
    let (ds, _) = gen_dataset(&SimConfig { s1: 3, s2: 4, ..SimConfig::new(100, 12, 20, 70) }).unwrap();
    let first = fit_first_stage(&ds, &Tuning::default()).unwrap();
    let beta = fit_second_stage(&ds.y, &first.d_hat, &Tuning::default()).unwrap().beta_hat;
    let stats = run_inference(&ds.y, &first.d_hat, &beta, &InferenceOptions::default()).unwrap();
    assert!((1..=100).contains(&stats.delta_hat));
    assert_eq!(stats.delta_objective.len(), 100);
    assert!(stats.delta_objective.iter().all(|o| *o >= 0.0));
    for i in 0..12 {
        assert!((0.0..=1.0).contains(&stats.pvalues[i]));
        if stats.flags[i].is_none() {
            assert_eq!(stats.pvalues[i], two_sided_pvalue(stats.t_hat[i]));
        }
    }
}

proptest! {
    #[test]
    fn pvalue_decreases_in_magnitude(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let (lo, hi) = if a.abs() < b.abs() { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (two_sided_pvalue(lo), two_sided_pvalue(hi));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_hi <= p_lo);
        prop_assert_eq!(two_sided_pvalue(-a), two_sided_pvalue(a));
    }
}
