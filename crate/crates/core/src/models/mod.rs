//! Regression families used to impute missing potential outcomes.
//!
//! Every family here is *prediction unbiased* on its training arm: the mean
//! in-sample prediction equals the mean training outcome. Canonical-link GLMs
//! (OLS with an intercept, logistic, Poisson) get this from their first-order
//! conditions; the log-outcome families get it from a debiasing offset or a
//! second-stage OLS on the base predictions; isotonic regression gets it from
//! the pooling structure of PAVA. [`FittedModel::prediction_unbiased`] records
//! whether the property holds numerically for a particular fit.

mod glm;
mod isotonic;
mod linear;

pub use glm::{fit_glm, is_separated, GlmFamily, GlmFit};
pub use isotonic::{fit_isotonic, pava, IsotonicFit};
pub use linear::{calibrate_ols2, debias, fit_log_ols, fit_ols};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::ArmView;
use crate::error::{Arm, Error, Result};

/// Tolerance factor of the prediction-unbiasedness certificate:
/// `|mean(fitted - y)| <= UNBIASED_TOLERANCE * (1 + |mean(y)|)`.
pub const UNBIASED_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant,
    Ols,
    Logistic,
    Poisson,
    LogOlsDebiased,
    LogOlsCalibrated,
    Isotonic,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Constant,
        Family::Ols,
        Family::Logistic,
        Family::Poisson,
        Family::LogOlsDebiased,
        Family::LogOlsCalibrated,
        Family::Isotonic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::Ols => "ols",
            Family::Logistic => "logistic",
            Family::Poisson => "poisson",
            Family::LogOlsDebiased => "log_ols_debiased",
            Family::LogOlsCalibrated => "log_ols_calibrated",
            Family::Isotonic => "isotonic",
        }
    }

    /// Checks the outcome constraints of the family.
    pub fn check_outcomes(self, y: &[f64]) -> Result<()> {
        let bad = |detail: String| {
            Err(Error::OutcomeDomain {
                family: self.name(),
                detail,
            })
        };
        match self {
            Family::Logistic => {
                if let Some((i, v)) = y.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
                    return bad(format!("outcome {v} at training row {i} is not 0 or 1"));
                }
            }
            Family::Poisson => {
                if let Some((i, v)) = y.iter().enumerate().find(|(_, &v)| v < 0.0) {
                    return bad(format!("outcome {v} at training row {i} is negative"));
                }
                if y.iter().all(|&v| v == 0.0) {
                    return bad("all outcomes are zero; the Poisson MLE does not exist".into());
                }
            }
            Family::LogOlsDebiased | Family::LogOlsCalibrated => {
                if let Some((i, v)) = y.iter().enumerate().find(|(_, &v)| v <= 0.0) {
                    return bad(format!("outcome {v} at training row {i} is not strictly positive"));
                }
            }
            Family::Constant | Family::Ols | Family::Isotonic => {}
        }
        Ok(())
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown model family `{s}`")))
    }
}

/// Newton solver settings for the GLM families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the mean-loss gradient has infinity norm at most this.
    pub gradient_tolerance: f64,
    /// Smallest admissible Hessian eigenvalue at any iterate.
    pub min_hessian_eigenvalue_floor: f64,
    pub step_halving_max: usize,
    /// Logistic fits whose coefficient norm exceeds this are reported as separated.
    pub divergence_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            min_hessian_eigenvalue_floor: 1e-8,
            step_halving_max: 30,
            divergence_threshold: 1e3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.gradient_tolerance > 0.0
            && self.min_hessian_eigenvalue_floor > 0.0
            && self.step_halving_max > 0
            && self.divergence_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(
                "solver settings must all be positive".into(),
            ))
        }
    }
}

/// Which regression to fit in one arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Apply `ln` to every non-intercept covariate before fitting.
    #[serde(default)]
    pub log_covariates: bool,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            solver: SolverConfig::default(),
            log_covariates: false,
        }
    }

    pub fn with_log_covariates(mut self, on: bool) -> Self {
        self.log_covariates = on;
        self
    }
}

impl From<Family> for ModelSpec {
    fn from(family: Family) -> Self {
        ModelSpec::new(family)
    }
}

/// Family-specific parameters of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelParams {
    Constant {
        mean: f64,
    },
    /// Linear predictor `theta^T x`, mapped through the inverse link of the family.
    Linear {
        coefficients: Vec<f64>,
    },
    LogLinearDebiased {
        coefficients: Vec<f64>,
        bias_offset: f64,
    },
    LogLinearCalibrated {
        coefficients: Vec<f64>,
        calibration_intercept: f64,
        calibration_slope: f64,
    },
    Isotonic {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A regression fitted on one arm.
#[derive(Clone, Debug, Serialize)]
pub struct FittedModel {
    family: Family,
    #[serde(rename = "parameters")]
    params: ModelParams,
    arm: Arm,
    #[serde(skip)]
    training_indices: Vec<usize>,
    #[serde(skip)]
    fitted: Vec<f64>,
    #[serde(skip)]
    training_mean_outcome: f64,
    prediction_unbiased: bool,
    log_covariates: bool,
    #[serde(skip)]
    has_intercept: bool,
    #[serde(skip)]
    n_columns: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
}

impl FittedModel {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Arm the model was trained on.
    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn training_indices(&self) -> &[usize] {
        &self.training_indices
    }

    /// In-sample predictions, aligned with [`Self::training_indices`].
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn training_mean_outcome(&self) -> f64 {
        self.training_mean_outcome
    }

    pub fn prediction_unbiased(&self) -> bool {
        self.prediction_unbiased
    }

    /// Newton iterations used, for the GLM families.
    pub fn iterations(&self) -> Option<usize> {
        self.iterations
    }

    /// Coefficients of the linear predictor, when the family has one.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.params {
            ModelParams::Linear { coefficients }
            | ModelParams::LogLinearDebiased { coefficients, .. }
            | ModelParams::LogLinearCalibrated { coefficients, .. } => Some(coefficients),
            _ => None,
        }
    }

    /// Predictions on arbitrary covariate rows laid out like the training design.
    pub fn predict(&self, covariates: &DMatrix<f64>) -> Result<Vec<f64>> {
        if covariates.ncols() != self.n_columns {
            return Err(Error::DimensionMismatch {
                expected: self.n_columns,
                actual: covariates.ncols(),
            });
        }
        let x = transform_covariates(covariates.clone(), self.log_covariates, self.has_intercept)?;
        let eta = |coefficients: &[f64]| -> DVector<f64> {
            &x * DVector::from_column_slice(coefficients)
        };
        let out = match (&self.params, self.family) {
            (ModelParams::Constant { mean }, _) => vec![*mean; x.nrows()],
            (ModelParams::Linear { coefficients }, Family::Logistic) => eta(coefficients)
                .iter()
                .map(|&e| logistic(e))
                .collect(),
            (ModelParams::Linear { coefficients }, Family::Poisson) => {
                eta(coefficients).iter().map(|&e| e.exp()).collect()
            }
            (ModelParams::Linear { coefficients }, _) => eta(coefficients).iter().copied().collect(),
            (
                ModelParams::LogLinearDebiased {
                    coefficients,
                    bias_offset,
                },
                _,
            ) => eta(coefficients)
                .iter()
                .map(|&e| e.exp() - bias_offset)
                .collect(),
            (
                ModelParams::LogLinearCalibrated {
                    coefficients,
                    calibration_intercept,
                    calibration_slope,
                },
                _,
            ) => eta(coefficients)
                .iter()
                .map(|&e| calibration_intercept + calibration_slope * e.exp())
                .collect(),
            (ModelParams::Isotonic { knots, values }, _) => {
                let col = isotonic_column(self.n_columns, self.has_intercept)?;
                let fit = IsotonicFit::from_parts(knots.clone(), values.clone());
                x.column(col).iter().map(|&v| fit.evaluate(v)).collect()
            }
        };
        Ok(out)
    }
}

/// Fits `spec` on the rows of one arm. Errors are attributed to the arm.
pub fn fit(spec: &ModelSpec, arm: &ArmView<'_>) -> Result<FittedModel> {
    let ds = arm.dataset();
    fit_rows(
        spec,
        ds.covariates(),
        ds.outcomes(),
        ds.has_intercept(),
        arm.indices(),
        arm.arm(),
    )
    .map_err(|e| e.in_arm(arm.arm()))
}

/// Fits `spec` on `outcomes[i]`, `covariates.row(i)` for `i` in `indices`.
pub(crate) fn fit_rows(
    spec: &ModelSpec,
    covariates: &DMatrix<f64>,
    outcomes: &[f64],
    has_intercept: bool,
    indices: &[usize],
    arm: Arm,
) -> Result<FittedModel> {
    spec.solver.validate()?;
    if indices.is_empty() {
        return Err(Error::DegenerateArm { arm });
    }
    let y: Vec<f64> = indices.iter().map(|&i| outcomes[i]).collect();
    spec.family.check_outcomes(&y)?;
    let n_columns = covariates.ncols();
    let x = transform_covariates(
        covariates.select_rows(indices.iter()),
        spec.log_covariates,
        has_intercept,
    )?;

    let mut iterations = None;
    let (params, fitted) = match spec.family {
        Family::Constant => {
            let m = mean(&y);
            (ModelParams::Constant { mean: m }, vec![m; y.len()])
        }
        Family::Ols => {
            let theta = fit_ols(&x, &y)?;
            let fitted = (&x * &theta).iter().copied().collect();
            (
                ModelParams::Linear {
                    coefficients: theta.iter().copied().collect(),
                },
                fitted,
            )
        }
        Family::Logistic | Family::Poisson => {
            let glm_family = if spec.family == Family::Logistic {
                GlmFamily::Logistic
            } else {
                GlmFamily::Poisson
            };
            let fit = fit_glm(&x, &y, glm_family, &spec.solver)?;
            iterations = Some(fit.iterations);
            let fitted = fit.fitted(&x);
            (
                ModelParams::Linear {
                    coefficients: fit.coefficients.iter().copied().collect(),
                },
                fitted,
            )
        }
        Family::LogOlsDebiased | Family::LogOlsCalibrated => {
            let theta = fit_log_ols(&x, &y)?;
            let base: Vec<f64> = (&x * &theta).iter().map(|e| e.exp()).collect();
            let coefficients = theta.iter().copied().collect();
            if spec.family == Family::LogOlsDebiased {
                let offset = debias(&base, &y);
                let fitted = base.iter().map(|b| b - offset).collect();
                (
                    ModelParams::LogLinearDebiased {
                        coefficients,
                        bias_offset: offset,
                    },
                    fitted,
                )
            } else {
                let (b0, b1) = calibrate_ols2(&base, &y)?;
                let fitted = base.iter().map(|b| b0 + b1 * b).collect();
                (
                    ModelParams::LogLinearCalibrated {
                        coefficients,
                        calibration_intercept: b0,
                        calibration_slope: b1,
                    },
                    fitted,
                )
            }
        }
        Family::Isotonic => {
            let col = isotonic_column(n_columns, has_intercept)?;
            let xs: Vec<f64> = x.column(col).iter().copied().collect();
            let fit = fit_isotonic(&xs, &y)?;
            let fitted = fit.fitted().to_vec();
            let (knots, values) = fit.into_parts();
            (ModelParams::Isotonic { knots, values }, fitted)
        }
    };

    let training_mean_outcome = mean(&y);
    let prediction_unbiased = is_prediction_unbiased(&fitted, &y);
    Ok(FittedModel {
        family: spec.family,
        params,
        arm,
        training_indices: indices.to_vec(),
        fitted,
        training_mean_outcome,
        prediction_unbiased,
        log_covariates: spec.log_covariates,
        has_intercept,
        n_columns,
        iterations,
    })
}

/// The in-sample certificate `|mean(fitted - y)| <= 1e-8 (1 + |mean y|)`.
pub fn is_prediction_unbiased(fitted: &[f64], y: &[f64]) -> bool {
    let bias = fitted.iter().zip(y).map(|(f, o)| f - o).sum::<f64>() / y.len() as f64;
    bias.abs() <= UNBIASED_TOLERANCE * (1.0 + mean(y).abs())
}

fn isotonic_column(n_columns: usize, has_intercept: bool) -> Result<usize> {
    let free = n_columns - usize::from(has_intercept && n_columns > 0);
    if free != 1 {
        return Err(Error::InvalidSpec(format!(
            "isotonic regression needs exactly one covariate besides the intercept, got {free}"
        )));
    }
    Ok(0)
}

/// Elementwise `ln` on every column except the trailing intercept.
fn transform_covariates(
    mut x: DMatrix<f64>,
    log: bool,
    has_intercept: bool,
) -> Result<DMatrix<f64>> {
    if !log {
        return Ok(x);
    }
    let free = x.ncols() - usize::from(has_intercept && x.ncols() > 0);
    for j in 0..free {
        for (i, v) in x.column_mut(j).iter_mut().enumerate() {
            if *v <= 0.0 {
                return Err(Error::CovariateDomain {
                    detail: format!(
                        "log transform needs positive covariates; column {j}, row {i} is {v}"
                    ),
                });
            }
            *v = v.ln();
        }
    }
    Ok(x)
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use approx::assert_relative_eq;

    fn dataset(x: &[f64], y: &[f64], z: &[bool]) -> Dataset {
        let n = y.len();
        let mut m = DMatrix::from_element(n, 2, 1.0);
        m.set_column(0, &DVector::from_column_slice(x));
        Dataset::new(m, y.to_vec(), z.to_vec(), true).unwrap()
    }

    #[test]
    fn constant_family_predicts_mean() {
        let ds = dataset(&[0.0, 1.0, 2.0], &[2.0, 4.0, 9.0], &[true, true, false]);
        let m = fit(&Family::Constant.into(), &ds.arm(Arm::Treated).unwrap()).unwrap();
        assert_eq!(m.predict(ds.covariates()).unwrap(), vec![3.0; 3]);
        assert!(m.prediction_unbiased());
    }

    #[test]
    fn logistic_rejects_fractional_outcomes() {
        let ds = dataset(&[0.0, 1.0, 2.0], &[0.0, 0.5, 1.0], &[true, true, false]);
        let err = fit(&Family::Logistic.into(), &ds.arm(Arm::Treated).unwrap()).unwrap_err();
        assert_eq!(err.code(), "OUTCOME_DOMAIN_ERROR");
        assert_eq!(err.arm(), Some(Arm::Treated));
    }

    #[test]
    fn ols_exact_fit_without_intercept() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let ds = Dataset::new(x, vec![2.0, 4.0, 6.0], vec![true, true, false], false).unwrap();
        let m = fit(&Family::Ols.into(), &ds.arm(Arm::Treated).unwrap()).unwrap();
        assert_relative_eq!(m.coefficients().unwrap()[0], 2.0, epsilon = 1e-12);
        for (f, y) in m.fitted().iter().zip([2.0, 4.0]) {
            assert_relative_eq!(*f, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_link_functions() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0], &[true, true, true, false]);
        let logit = FittedModel {
            family: Family::Logistic,
            params: ModelParams::Linear {
                coefficients: vec![0.0, 0.0],
            },
            arm: Arm::Treated,
            training_indices: vec![],
            fitted: vec![],
            training_mean_outcome: 0.5,
            prediction_unbiased: true,
            log_covariates: false,
            has_intercept: true,
            n_columns: 2,
            iterations: None,
        };
        assert_eq!(logit.predict(ds.covariates()).unwrap(), vec![0.5; 4]);
        let mut pois = logit.clone();
        pois.family = Family::Poisson;
        assert_eq!(pois.predict(ds.covariates()).unwrap(), vec![1.0; 4]);
        let err = pois.predict(&DMatrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 3 }));
    }

    #[test]
    fn single_row_arm_is_rank_deficient_for_two_columns() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0], &[true, true, true, false]);
        let err = fit(&Family::Logistic.into(), &ds.arm(Arm::Control).unwrap()).unwrap_err();
        assert_eq!(err.code(), "RANK_DEFICIENT");
    }

    #[test]
    fn isotonic_interpolates_between_knots() {
        let ds = dataset(
            &[1.0, 2.0, 3.0, 9.0],
            &[1.0, 2.0, 3.0, 0.0],
            &[true, true, true, false],
        );
        let m = fit(&Family::Isotonic.into(), &ds.arm(Arm::Treated).unwrap()).unwrap();
        let q = DMatrix::from_row_slice(3, 2, &[2.5, 1.0, 0.0, 1.0, 10.0, 1.0]);
        assert_eq!(m.predict(&q).unwrap(), vec![2.5, 1.0, 3.0]);
    }

    #[test]
    fn isotonic_needs_single_covariate() {
        let x = DMatrix::from_element(3, 3, 1.0);
        let ds = Dataset::new(x, vec![1.0, 2.0, 3.0], vec![true, true, false], true).unwrap();
        let err = fit(&Family::Isotonic.into(), &ds.arm(Arm::Treated).unwrap()).unwrap_err();
        assert_eq!(err.code(), "INVALID_SPEC");
    }

    #[test]
    fn log_covariates_require_positive_values() {
        let ds = dataset(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &[true, true, false]);
        let spec = ModelSpec::new(Family::Ols).with_log_covariates(true);
        let err = fit(&spec, &ds.arm(Arm::Treated).unwrap()).unwrap_err();
        assert_eq!(err.code(), "COVARIATE_DOMAIN_ERROR");
    }

    #[test]
    fn family_round_trips_through_names() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.name()));
        }
        assert!("probit".parse::<Family>().is_err());
    }
}
