//! Synthetic finite populations. All randomness is spent here; the returned
//! population is a fixed set of units with both potential outcomes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{SyntheticPopulation, INTERCEPT_NAME};
use crate::error::{Error, Result};
use crate::models::logistic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationKind {
    /// Counts with a log-linear mean in one covariate.
    PoissonCounts,
    /// Right-skewed positive outcomes, log-normal around a log-linear trend.
    LognormalSkewed,
    /// Outcomes in [0, 1] with an increasing signal in one covariate.
    MonotoneBounded,
    /// Linear trend plus Gaussian noise.
    LinearGaussian,
    /// Binary outcomes from a logistic model.
    BinaryLogistic,
}

impl PopulationKind {
    pub const ALL: [PopulationKind; 5] = [
        PopulationKind::PoissonCounts,
        PopulationKind::LognormalSkewed,
        PopulationKind::MonotoneBounded,
        PopulationKind::LinearGaussian,
        PopulationKind::BinaryLogistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PopulationKind::PoissonCounts => "poisson_counts",
            PopulationKind::LognormalSkewed => "lognormal_skewed",
            PopulationKind::MonotoneBounded => "monotone_bounded",
            PopulationKind::LinearGaussian => "linear_gaussian",
            PopulationKind::BinaryLogistic => "binary_logistic",
        }
    }
}

impl std::str::FromStr for PopulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PopulationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidPlan(format!("unknown population kind `{s}`")))
    }
}

/// Draws a population of `n` units, each with one covariate `x` and an
/// intercept column.
///
/// * `poisson_counts`: `x ~ U(0, 2)`, `y0 ~ Poisson(exp(1.8 x))`. For
///   `effect >= 0`, `y1 = y0 + Poisson(exp(1.8 x) (e^effect - 1))`, so that
///   `E y1 = exp(1.8 x + effect)`; for negative effects `y1` is a binomial
///   thinning of `y0` with keep probability `e^effect`.
/// * `lognormal_skewed`: `u ~ U(0, 2)`, covariate `x = e^u`,
///   `y0 = exp(2.5 u + 0.35 e)` with `e ~ N(0, 1)`, `y1 = y0 e^effect`.
/// * `monotone_bounded`: `x ~ U(0, 1)`, `s = 0.2 + 0.6 x^2`,
///   `y0 = clamp(s + 0.25 e, 0, 1)`, `y1 = clamp(s + effect + 0.25 e, 0, 1)`
///   with the same `e`, hence `y1 = y0` when `effect = 0`.
/// * `linear_gaussian`: `x` on the even grid over [0, 1],
///   `y0 = 1 + 2 x + e`, `y1 = y0 + effect (1 + x)`.
/// * `binary_logistic`: `x ~ U(-2, 2)`, one uniform `u` per unit,
///   `y_t = 1[u < logistic(-0.5 + 1.5 x + effect t)]`.
pub fn generate_population(
    kind: PopulationKind,
    n: usize,
    effect: f64,
    seed: u64,
) -> Result<SyntheticPopulation> {
    if n < 4 {
        return Err(Error::InvalidPlan(format!(
            "a generated population needs at least 4 units, got {n}"
        )));
    }
    if !effect.is_finite() {
        return Err(Error::InvalidPlan(format!("effect must be finite, got {effect}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);

    match kind {
        PopulationKind::PoissonCounts => {
            for _ in 0..n {
                let xi: f64 = rng.random_range(0.0..2.0);
                let lambda = (1.8 * xi).exp();
                let base = poisson(&mut rng, lambda);
                let treated = if effect >= 0.0 {
                    base + poisson(&mut rng, lambda * effect.exp_m1())
                } else {
                    Binomial::new(base as u64, effect.exp())
                        .expect("keep probability lies in (0, 1)")
                        .sample(&mut rng) as f64
                };
                x.push(xi);
                y0.push(base);
                y1.push(treated);
            }
        }
        PopulationKind::LognormalSkewed => {
            for _ in 0..n {
                let u: f64 = rng.random_range(0.0..2.0);
                let e: f64 = rng.sample(StandardNormal);
                let base = (2.5 * u + 0.35 * e).exp();
                x.push(u.exp());
                y0.push(base);
                y1.push(base * effect.exp());
            }
        }
        PopulationKind::MonotoneBounded => {
            for _ in 0..n {
                let xi: f64 = rng.random_range(0.0..1.0);
                let e: f64 = rng.sample(StandardNormal);
                let s = 0.2 + 0.6 * xi * xi;
                x.push(xi);
                y0.push((s + 0.25 * e).clamp(0.0, 1.0));
                y1.push((s + effect + 0.25 * e).clamp(0.0, 1.0));
            }
        }
        PopulationKind::LinearGaussian => {
            for i in 0..n {
                let xi = i as f64 / (n - 1) as f64;
                let e: f64 = rng.sample(StandardNormal);
                let base = 1.0 + 2.0 * xi + e;
                x.push(xi);
                y0.push(base);
                y1.push(base + effect * (1.0 + xi));
            }
        }
        PopulationKind::BinaryLogistic => {
            for _ in 0..n {
                let xi: f64 = rng.random_range(-2.0..2.0);
                let u: f64 = rng.random();
                let eta = -0.5 + 1.5 * xi;
                x.push(xi);
                y0.push(f64::from(u8::from(u < logistic(eta))));
                y1.push(f64::from(u8::from(u < logistic(eta + effect))));
            }
        }
    }

    let mut covariates = DMatrix::from_element(n, 2, 1.0);
    for (i, xi) in x.into_iter().enumerate() {
        covariates[(i, 0)] = xi;
    }
    SyntheticPopulation::with_names(
        covariates,
        vec!["x".to_string(), INTERCEPT_NAME.to_string()],
        y1,
        y0,
        true,
    )
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda).expect("rate is positive").sample(rng)
}
