//! Quantities that need both potential outcomes of every unit.

use serde::Serialize;

use crate::dataset::SyntheticPopulation;
use crate::error::{Arm, Error, Result};
use crate::models::{self, FittedModel, ModelSpec};

/// Population-level fits of each arm's model and the implied asymptotic
/// variance of the imputation estimator under complete randomization with
/// `n1` treated units.
#[derive(Clone, Debug, Serialize)]
pub struct PopulationOracle {
    pub n: usize,
    pub n1: usize,
    pub tau: f64,
    pub model_1: FittedModel,
    pub model_0: FittedModel,
    /// `y_ti - mu_t(x_i)` for every unit.
    #[serde(skip)]
    pub residuals_1: Vec<f64>,
    #[serde(skip)]
    pub residuals_0: Vec<f64>,
    /// Mean squared population residual, divisor `n`.
    pub mse_1: f64,
    pub mse_0: f64,
    /// Residual correlation `mean(e1 e0) / sqrt(mse_1 mse_0)`; undefined
    /// when either residual vector vanishes.
    pub rho: Option<f64>,
    /// Limit of `n Var(tau_hat)`:
    /// `mse_1 / p + mse_0 / (1 - p) - mean((e1 - e0)^2)` with `p = n1 / n`.
    pub sigma2: f64,
    /// `n (mse_1 / n1 + mse_0 / n0)`, which bounds `sigma2` from above.
    pub variance_bound: f64,
}

impl PopulationOracle {
    /// Asymptotic standard deviation of `tau_hat`, `sqrt(sigma2 / n)`.
    pub fn asymptotic_sd(&self) -> f64 {
        (self.sigma2.max(0.0) / self.n as f64).sqrt()
    }
}

pub fn population_oracle(
    pop: &SyntheticPopulation,
    spec1: &ModelSpec,
    spec0: &ModelSpec,
    n1: usize,
) -> Result<PopulationOracle> {
    let n = pop.n();
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidArmSize { n, n1 });
    }
    let all: Vec<usize> = (0..n).collect();
    let fit = |spec: &ModelSpec, arm: Arm| {
        models::fit_rows(
            spec,
            pop.covariates(),
            pop.potential_outcomes(arm),
            pop.has_intercept(),
            &all,
            arm,
        )
        .map_err(|e| e.in_arm(arm))
    };
    let model_1 = fit(spec1, Arm::Treated)?;
    let model_0 = fit(spec0, Arm::Control)?;
    let residuals = |m: &FittedModel, y: &[f64]| -> Vec<f64> {
        y.iter().zip(m.fitted()).map(|(a, b)| a - b).collect()
    };
    let residuals_1 = residuals(&model_1, pop.y1());
    let residuals_0 = residuals(&model_0, pop.y0());

    let nf = n as f64;
    let mse_1 = residuals_1.iter().map(|e| e * e).sum::<f64>() / nf;
    let mse_0 = residuals_0.iter().map(|e| e * e).sum::<f64>() / nf;
    let cross = residuals_1.iter().zip(&residuals_0).map(|(a, b)| a * b).sum::<f64>() / nf;
    let rho = (mse_1 > 0.0 && mse_0 > 0.0).then(|| (cross / (mse_1 * mse_0).sqrt()).clamp(-1.0, 1.0));
    let diff2 = residuals_1
        .iter()
        .zip(&residuals_0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / nf;
    let p = n1 as f64 / nf;
    let sigma2 = mse_1 / p + mse_0 / (1.0 - p) - diff2;
    let variance_bound = nf * (mse_1 / n1 as f64 + mse_0 / (n - n1) as f64);

    Ok(PopulationOracle {
        n,
        n1,
        tau: pop.tau(),
        model_1,
        model_0,
        residuals_1,
        residuals_0,
        mse_1,
        mse_0,
        rho,
        sigma2,
        variance_bound,
    })
}

/// Randomization variance of the mean of `values` over a uniformly drawn
/// subset of `n1` units: `(1 - p)/p * 1/(n - 1) * mean((a - abar)^2)`.
pub fn sample_mean_variance(values: &[f64], n1: usize) -> f64 {
    let n = values.len() as f64;
    let p = n1 as f64 / n;
    let m = values.iter().sum::<f64>() / n;
    let spread = values.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
    (1.0 - p) / p / (n - 1.0) * spread
}
