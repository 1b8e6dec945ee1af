use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rand_adjust::design::{enumerate_assignments, sample_assignment, stream_rng};
use rand_adjust::estimator::{EstimatorConfig, QuantileKind};
use rand_adjust::models::{Family, ModelSpec};
use rand_adjust::simulate::{
    exhaustive_bias, generate_population, population_oracle, run, Mode, NamedEstimator,
    PopulationKind, SimulationPlan,
};
use rand_adjust::SyntheticPopulation;

fn dim() -> EstimatorConfig {
    EstimatorConfig::DifferenceInMeans {
        quantile: QuantileKind::TWelch,
    }
}

fn plan(pop: SyntheticPopulation, n1: usize, replications: usize, seed: u64, estimators: Vec<NamedEstimator>) -> SimulationPlan {
    SimulationPlan {
        population: pop,
        n1,
        replications,
        seed,
        alpha: 0.05,
        mode: Mode::Sampled,
        estimators,
    }
}

fn small_population(seed: u64, n: usize) -> SyntheticPopulation {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 1 { 1.0 } else { r.random_range(-1.0..1.0) });
    let y0: Vec<f64> = (0..n).map(|i| 1.0 + x[(i, 0)] + r.random_range(-1.0..1.0)).collect();
    let y1: Vec<f64> = y0.iter().map(|v| v + r.random_range(-0.5..1.5)).collect();
    SyntheticPopulation::new(x, y1, y0, true).unwrap()
}

/// Z coefficient of the interacted regression, solved by SVD.
fn interacted_tau(x: &[f64], y: &[f64], z: &[bool]) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let design = DMatrix::from_fn(n, 4, |i, c| {
        let t = f64::from(u8::from(z[i]));
        [1.0, t, x[i] - m, t * (x[i] - m)][c]
    });
    design.svd(true, true).solve(&DVector::from_column_slice(y), 1e-12).unwrap()[1]
}

#[test]
fn enumeration_matches_combinations() {
    for (n, n1) in [(6, 3), (7, 2), (8, 5)] {
        let ours: BTreeSet<Vec<usize>> = enumerate_assignments(n, n1, 10_000)
            .unwrap()
            .into_iter()
            .map(|a| (0..n).filter(|&i| a.z()[i]).collect())
            .collect();
        let reference: BTreeSet<Vec<usize>> = (0..n).combinations(n1).collect();
        assert_eq!(ours, reference);
    }
}

#[test]
fn sampled_assignments_are_deterministic_and_balanced() {
    let a = sample_assignment(20, 7, 99).unwrap();
    assert_eq!(a, sample_assignment(20, 7, 99).unwrap());
    assert_eq!(a.n1(), 7);
    let mut r1 = stream_rng(5, 1);
    let mut r2 = stream_rng(5, 2);
    assert_ne!(r1.random::<u64>(), r2.random::<u64>());
}

#[test]
fn ols_pair_exhaustive_mean_matches_brute_force() {
    let pop = generate_population(PopulationKind::LinearGaussian, 10, 0.7, 4).unwrap();
    let config = EstimatorConfig::oaxaca_blinder(Family::Ols, Family::Ols);
    let exact = exhaustive_bias(&pop, &config, 5).unwrap();
    assert_eq!(exact.assignments, 252);
    assert_eq!(exact.failures, 0);

    let x: Vec<f64> = pop.covariates().column(0).iter().copied().collect();
    let mut total = 0.0;
    let mut count = 0;
    for treated in (0..10).combinations(5) {
        let z: Vec<bool> = (0..10).map(|i| treated.contains(&i)).collect();
        let y: Vec<f64> = (0..10).map(|i| if z[i] { pop.y1()[i] } else { pop.y0()[i] }).collect();
        total += interacted_tau(&x, &y, &z);
        count += 1;
    }
    let reference = total / count as f64;
    assert!((exact.mean.unwrap() - reference).abs() <= 1e-10, "{:?} vs {reference}", exact.mean);
    assert!((exact.bias.unwrap() - (reference - pop.tau())).abs() <= 1e-10);
}

#[test]
fn logistic_failures_match_separation_oracle() {
    let x = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
    let y0 = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let y1 = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
    let cov = DMatrix::from_fn(8, 2, |i, j| if j == 0 { x[i] } else { 1.0 });
    let pop = SyntheticPopulation::new(cov, y1.to_vec(), y0.to_vec(), true).unwrap();
    let config = EstimatorConfig::oaxaca_blinder(Family::Logistic, Family::Logistic);
    let exact = exhaustive_bias(&pop, &config, 4).unwrap();

    let separable = |xs: &[f64], ys: &[f64]| {
        let ones: Vec<f64> = xs.iter().zip(ys).filter(|p| *p.1 == 1.0).map(|p| *p.0).collect();
        let zeros: Vec<f64> = xs.iter().zip(ys).filter(|p| *p.1 == 0.0).map(|p| *p.0).collect();
        let (lo1, hi1) = ones.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(*v), a.1.max(*v)));
        let (lo0, hi0) = zeros.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(*v), a.1.max(*v)));
        hi0 <= lo1 || hi1 <= lo0
    };
    let mut expected = 0;
    for treated in (0..8).combinations(4) {
        let control: Vec<usize> = (0..8).filter(|i| !treated.contains(i)).collect();
        let arm = |units: &[usize], y: &[f64]| {
            let xs: Vec<f64> = units.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = units.iter().map(|&i| y[i]).collect();
            separable(&xs, &ys)
        };
        if arm(&treated, &y1) || arm(&control, &y0) {
            expected += 1;
        }
    }
    assert!(expected > 0 && expected < 70);
    assert_eq!(exact.failures, expected);
    assert_eq!(exact.failure_codes.get("SEPARATION"), Some(&expected));
    assert_eq!(exact.successes + exact.failures, 70);
}

#[test]
fn null_effect_population_averages_to_zero() {
    let base = small_population(77, 9);
    let pop = SyntheticPopulation::new(base.covariates().clone(), base.y0().to_vec(), base.y0().to_vec(), true).unwrap();
    let exact = exhaustive_bias(&pop, &dim(), 4).unwrap();
    assert_eq!(exact.tau, 0.0);
    assert_eq!(exact.assignments, 126);
    assert!(exact.mean.unwrap().abs() <= 1e-12);
}

#[test]
fn sampled_sd_matches_closed_form_variance() {
    let pop = generate_population(PopulationKind::LinearGaussian, 40, 1.0, 12).unwrap();
    let n = 40.0;
    let n1 = 15usize;
    // Var(DiM) = S1^2/n1 + S0^2/n0 - S_tau^2/n, with (n - 1) denominators
    let s2 = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let diff: Vec<f64> = pop.y1().iter().zip(pop.y0()).map(|(a, b)| a - b).collect();
    let variance = s2(pop.y1()) / n1 as f64 + s2(pop.y0()) / (n - n1 as f64) - s2(&diff) / n;

    let report = run(&plan(pop, n1, 40_000, 3, vec![NamedEstimator::new("dim", dim())])).unwrap();
    let summary = report.estimator("dim").unwrap();
    let ratio = summary.sd.unwrap() / variance.sqrt();
    assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
    // standard error of the mean is sd / sqrt(R)
    assert!(summary.bias.unwrap().abs() < 4.0 * variance.sqrt() / 200.0);
}

#[test]
fn coverage_agrees_across_disjoint_seeds() {
    let pop = generate_population(PopulationKind::PoissonCounts, 200, 0.4, 21).unwrap();
    let estimators = vec![
        NamedEstimator::new("dim", dim()),
        NamedEstimator::new("poisson", EstimatorConfig::oaxaca_blinder(Family::Poisson, Family::Poisson)),
    ];
    let r = 4000;
    let a = run(&plan(pop.clone(), 100, r, 1, estimators.clone())).unwrap();
    let b = run(&plan(pop, 100, r, 2, estimators)).unwrap();
    for name in ["dim", "poisson"] {
        let ca = a.estimator(name).unwrap().coverage.unwrap();
        let cb = b.estimator(name).unwrap().coverage.unwrap();
        let tol = 3.0 * (0.05 * 0.95 / r as f64).sqrt();
        assert!((ca - cb).abs() <= tol, "{name}: {ca} vs {cb}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let pop = generate_population(PopulationKind::BinaryLogistic, 80, 0.8, 2).unwrap();
    let estimators = vec![
        NamedEstimator::new("dim", dim()),
        NamedEstimator::new("logit", EstimatorConfig::oaxaca_blinder(Family::Logistic, Family::Logistic)),
    ];
    let p = plan(pop, 40, 500, 17, estimators);
    let reports: Vec<String> = [1, 3, 8]
        .into_iter()
        .map(|threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let report = pool.install(|| run(&p)).unwrap();
            serde_json::to_string(&report).unwrap()
        })
        .collect();
    assert!(reports.iter().all_equal());
}

#[test]
fn oracle_interval_covers_exhaustive_spread() {
    let pop = generate_population(PopulationKind::LinearGaussian, 12, 0.5, 8).unwrap();
    let constant = ModelSpec::new(Family::Constant);
    let oracle = population_oracle(&pop, &constant, &constant, 6).unwrap();
    assert!(oracle.sigma2 <= oracle.variance_bound + 1e-12);
    let values: Vec<f64> = enumerate_assignments(12, 6, 10_000)
        .unwrap()
        .iter()
        .map(|a| {
            let ds = pop.realize(a.z()).unwrap();
            dim().estimate(&ds, 0.05).unwrap().tau_hat
        })
        .collect();
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    // finite-population variance of DiM equals sigma^2 / (n - 1)
    assert!((var - oracle.sigma2 / 11.0).abs() <= 1e-10 * (1.0 + var));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn difference_in_means_is_exactly_unbiased(seed in any::<u64>(), n in 5usize..11, frac in 0.2f64..0.8) {
        let n1 = ((n as f64 * frac).round() as usize).clamp(2, n - 2);
        let pop = small_population(seed, n);
        let exact = exhaustive_bias(&pop, &dim(), n1).unwrap();
        prop_assert_eq!(exact.failures, 0);
        prop_assert!(exact.bias.unwrap().abs() <= 1e-12 * (1.0 + pop.tau().abs()));
    }

    #[test]
    fn constant_effect_shifts_every_assignment(seed in any::<u64>(), c in -5.0f64..5.0) {
        let base = small_population(seed, 8);
        let shifted_y1: Vec<f64> = base.y0().iter().map(|v| v + c).collect();
        let pop = SyntheticPopulation::new(base.covariates().clone(), shifted_y1, base.y0().to_vec(), true).unwrap();
        for config in [dim(), EstimatorConfig::oaxaca_blinder(Family::Ols, Family::Ols)] {
            for a in enumerate_assignments(8, 4, 100).unwrap() {
                let tau = config.estimate(&pop.realize(a.z()).unwrap(), 0.05).unwrap().tau_hat;
                let null = SyntheticPopulation::new(base.covariates().clone(), base.y0().to_vec(), base.y0().to_vec(), true).unwrap();
                let tau0 = config.estimate(&null.realize(a.z()).unwrap(), 0.05).unwrap().tau_hat;
                prop_assert!((tau - tau0 - c).abs() <= 1e-9 * (1.0 + c.abs() + tau0.abs()));
            }
        }
    }

    #[test]
    fn oracle_variance_never_exceeds_bound(seed in any::<u64>(), n in 8usize..40, fam in 0usize..2) {
        let family = [Family::Constant, Family::Ols][fam];
        let pop = small_population(seed, n);
        let spec = ModelSpec::new(family);
        let oracle = population_oracle(&pop, &spec, &spec, n / 2).unwrap();
        prop_assert!(oracle.sigma2 <= oracle.variance_bound * (1.0 + 1e-12) + 1e-12);
        prop_assert!(oracle.sigma2 >= -1e-12);
        if let Some(rho) = oracle.rho {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&rho));
        }
    }
}
