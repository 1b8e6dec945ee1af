use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use rand_adjust::models::{
    fit, fit_glm, fit_isotonic, is_separated, pava, Family, GlmFamily, ModelSpec, SolverConfig,
};
use rand_adjust::{Arm, Dataset};

/// A single-covariate binary sample (with intercept) is quasi-separated
/// exactly when the two classes' covariate ranges overlap in at most one point.
fn separable_1d(x: &[f64], y: &[f64]) -> bool {
    let ones = x.iter().zip(y).filter(|(_, v)| **v == 1.0).map(|(a, _)| *a);
    let zeros = x.iter().zip(y).filter(|(_, v)| **v == 0.0).map(|(a, _)| *a);
    let (min1, max1) = ones.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (min0, max0) = zeros.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    max0 <= min1 || max1 <= min0
}

fn with_intercept(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { x[i] } else { 1.0 })
}

fn treated_only(x: DMatrix<f64>, y: Vec<f64>) -> Dataset {
    let n = y.len();
    // one control unit so the dataset is well formed; only the treated arm is fitted
    let mut xs = x.insert_row(n, 0.0);
    let last = xs.ncols() - 1;
    xs[(n, last)] = 1.0;
    let mut ys = y;
    ys.push(0.0);
    let mut z = vec![true; n];
    z.push(false);
    Dataset::new(xs, ys, z, true).unwrap()
}

fn outcomes_for(family: Family, r: &mut ChaCha8Rng, x: f64) -> f64 {
    let eta = 0.2 + 0.7 * x;
    match family {
        Family::Logistic => f64::from(u8::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))),
        Family::Poisson => Poisson::new(eta.exp()).unwrap().sample(r),
        Family::LogOlsDebiased | Family::LogOlsCalibrated => (eta + 0.5 * (r.random::<f64>() - 0.5)).exp(),
        _ => eta + r.random::<f64>(),
    }
}

#[test]
fn logistic_separation_agrees_with_one_dimensional_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let mut seen = [0usize; 2];
    for _ in 0..400 {
        let n = r.random_range(4..12);
        let x: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..6u8))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..2u8))).collect();
        let design = with_intercept(&x);
        let full_rank = x.iter().any(|v| *v != x[0]);
        if !full_rank {
            continue;
        }
        let expected = separable_1d(&x, &y);
        seen[usize::from(expected)] += 1;
        assert_eq!(is_separated(&design, &y), expected, "x={x:?} y={y:?}");
        let result = fit_glm(&design, &y, GlmFamily::Logistic, &SolverConfig::default());
        if expected {
            assert_eq!(result.unwrap_err().code(), "SEPARATION");
        } else {
            let fit = result.unwrap();
            assert!(fit.gradient_norm <= 1e-10);
        }
    }
    assert!(seen[0] > 50 && seen[1] > 50, "{seen:?}");
}

#[test]
fn poisson_solution_satisfies_score_equations() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let n = 200;
    let x: DMatrix<f64> = DMatrix::from_fn(n, 3, |_, j| if j == 2 { 1.0 } else { r.random_range(-1.0..1.0) });
    let y: Vec<f64> = (0..n)
        .map(|i| Poisson::new((0.5f64 + x[(i, 0)] - 0.4 * x[(i, 1)]).exp()).unwrap().sample(&mut r))
        .collect();
    let fit = fit_glm(&x, &y, GlmFamily::Poisson, &SolverConfig::default()).unwrap();
    let mu = fit.fitted(&x);
    for j in 0..3 {
        let score: f64 = (0..n).map(|i| x[(i, j)] * (y[i] - mu[i])).sum();
        assert!(score.abs() / n as f64 <= 1e-9, "column {j}: {score}");
    }
    assert!((fit.coefficients[0] - 1.0).abs() < 0.25);
}

#[test]
fn logistic_rejects_non_binary_outcomes() {
    let ds = treated_only(with_intercept(&[0.0, 1.0, 2.0, 3.0]), vec![0.0, 1.0, 0.5, 1.0]);
    let err = fit(&ModelSpec::new(Family::Logistic), &ds.arm(Arm::Treated).unwrap()).unwrap_err();
    assert_eq!(err.code(), "OUTCOME_DOMAIN_ERROR");
}

#[test]
fn log_families_reject_nonpositive_outcomes() {
    let ds = treated_only(with_intercept(&[0.0, 1.0, 2.0, 3.0]), vec![1.0, 2.0, 0.0, 4.0]);
    for family in [Family::LogOlsDebiased, Family::LogOlsCalibrated] {
        let err = fit(&ModelSpec::new(family), &ds.arm(Arm::Treated).unwrap()).unwrap_err();
        assert_eq!(err.code(), "OUTCOME_DOMAIN_ERROR");
    }
}

#[test]
fn poisson_rejects_negative_outcomes() {
    let ds = treated_only(with_intercept(&[0.0, 1.0, 2.0, 3.0]), vec![1.0, -2.0, 0.0, 4.0]);
    let err = fit(&ModelSpec::new(Family::Poisson), &ds.arm(Arm::Treated).unwrap()).unwrap_err();
    assert_eq!(err.code(), "OUTCOME_DOMAIN_ERROR");
}

#[test]
fn isotonic_fit_is_monotone_and_extrapolates_flat() {
    let x = [3.0, 1.0, 2.0, 5.0, 4.0];
    let y = [2.0, 3.0, 1.0, 6.0, 4.0];
    let fit = fit_isotonic(&x, &y).unwrap();
    assert!(fit.values().windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(fit.evaluate(-10.0), fit.values()[0]);
    assert_eq!(fit.evaluate(10.0), *fit.values().last().unwrap());
    let mean_fit: f64 = fit.fitted().iter().sum::<f64>() / 5.0;
    assert!((mean_fit - 3.2).abs() < 1e-12);
}

#[test]
fn pava_pools_a_decreasing_run() {
    assert_eq!(pava(&[3.0, 2.0, 1.0], &[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
}

#[test]
fn solver_config_rejects_nonsense() {
    let mut spec = ModelSpec::new(Family::Poisson);
    spec.solver.max_iterations = 0;
    assert_eq!(spec.solver.validate().unwrap_err().code(), "INVALID_SPEC");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_family_is_prediction_unbiased_on_its_arm(seed in any::<u64>(), fam in 0usize..7, n in 12usize..60) {
        let family = Family::ALL[fam];
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(0.1..2.0)).collect();
        let y: Vec<f64> = xs.iter().map(|&x| outcomes_for(family, &mut r, x)).collect();
        let ds = treated_only(with_intercept(&xs), y.clone());
        match fit(&ModelSpec::new(family), &ds.arm(Arm::Treated).unwrap()) {
            Ok(model) => {
                let ybar = y.iter().sum::<f64>() / n as f64;
                let fbar = model.fitted().iter().sum::<f64>() / n as f64;
                prop_assert!(model.prediction_unbiased());
                prop_assert!((ybar - fbar).abs() <= 1e-8 * (1.0 + ybar.abs()));
                let predicted = model.predict(ds.covariates()).unwrap();
                for (a, b) in model.fitted().iter().zip(&predicted) {
                    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                }
            }
            Err(e) => {
                // only separation is an acceptable failure on these draws
                prop_assert_eq!(family, Family::Logistic);
                prop_assert_eq!(e.code(), "SEPARATION");
                prop_assert!(separable_1d(&xs, &y));
            }
        }
    }

    #[test]
    fn pava_output_is_monotone_and_weight_preserving(
        y in proptest::collection::vec(-10.0f64..10.0, 1..40),
    ) {
        let w: Vec<f64> = (0..y.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        let fitted = pava(&y, &w);
        prop_assert!(fitted.windows(2).all(|p| p[0] <= p[1] + 1e-12));
        let lhs: f64 = fitted.iter().zip(&w).map(|(f, w)| f * w).sum();
        let rhs: f64 = y.iter().zip(&w).map(|(v, w)| v * w).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }
}
