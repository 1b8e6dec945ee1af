//! Treatment-effect estimators: the imputation (Oaxaca-Blinder) estimator
//! with any pair of per-arm regressions, the difference in means, and the
//! interacted regression with sandwich standard errors.

mod interval;
mod lin;

pub use interval::{neyman_ci, normal_quantile, t_quantile, welch_df, Interval, QuantileKind};
pub use lin::{interaction_design, lin_interactions, robust_ols, HcVariant, RobustFit};

use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::Dataset;
use crate::error::{Arm, Error, Result};
use crate::models::{self, Family, FittedModel, ModelSpec};

/// R-squared above which, in both arms, a fit is flagged as close to the
/// degenerate regime where the variance bound is loose.
pub const NEAR_DEGENERATE_R2: f64 = 0.99;
/// Logistic fitted probabilities this close to 0 or 1 are flagged.
pub const NEAR_SEPARATION_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Warning {
    NearDegenerate,
    NearSeparation,
}

/// Estimator-specific output carried next to the common fields.
#[derive(Clone, Debug)]
pub enum Details {
    OaxacaBlinder {
        model_1: Box<FittedModel>,
        model_0: Box<FittedModel>,
    },
    LinInteractions {
        hc: HcVariant,
        /// Coefficients on `[1, Z, Xc, Z * Xc]`.
        coefficients: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct AdjustedEstimate {
    pub tau_hat: f64,
    pub interval: Interval,
    pub alpha: f64,
    pub quantile_kind: QuantileKind,
    /// In-sample residual variance per arm, divisor `n_t - 1`.
    pub mse1: f64,
    pub mse0: f64,
    pub r_squared_1: f64,
    pub r_squared_0: f64,
    pub n1: usize,
    pub n0: usize,
    pub warnings: Vec<Warning>,
    pub details: Details,
}

impl AdjustedEstimate {
    pub fn ci(&self) -> (f64, f64) {
        (self.interval.lower, self.interval.upper)
    }

    pub fn covers(&self, tau: f64) -> bool {
        self.interval.contains(tau)
    }

    pub fn model(&self, arm: Arm) -> Option<&FittedModel> {
        match &self.details {
            Details::OaxacaBlinder { model_1, model_0 } => Some(match arm {
                Arm::Treated => model_1,
                Arm::Control => model_0,
            }),
            Details::LinInteractions { .. } => None,
        }
    }
}

#[derive(Serialize)]
struct PerArm<T> {
    t1: T,
    t0: T,
}

#[derive(Serialize)]
struct QuantileJson {
    kind: &'static str,
    value: f64,
    df: Option<f64>,
}

#[derive(Serialize)]
struct RegressionJson<'a> {
    hc: HcVariant,
    coefficients: &'a [f64],
}

#[derive(Serialize)]
struct EstimateJson<'a> {
    estimator: &'static str,
    tau_hat: f64,
    ci: [f64; 2],
    standard_error: f64,
    alpha: f64,
    quantile: QuantileJson,
    n: PerArm<usize>,
    mse: PerArm<f64>,
    r_squared: PerArm<f64>,
    warnings: &'a [Warning],
    #[serde(skip_serializing_if = "Option::is_none")]
    model_1: Option<&'a FittedModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_0: Option<&'a FittedModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regression: Option<RegressionJson<'a>>,
}

impl Serialize for AdjustedEstimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (estimator, regression) = match &self.details {
            Details::OaxacaBlinder { .. } => ("oaxaca_blinder", None),
            Details::LinInteractions { hc, coefficients } => (
                "lin_interactions",
                Some(RegressionJson {
                    hc: *hc,
                    coefficients,
                }),
            ),
        };
        EstimateJson {
            estimator,
            tau_hat: self.tau_hat,
            ci: [self.interval.lower, self.interval.upper],
            standard_error: self.interval.standard_error,
            alpha: self.alpha,
            quantile: QuantileJson {
                kind: self.quantile_kind.name(),
                value: self.interval.quantile,
                df: self.interval.df,
            },
            n: PerArm {
                t1: self.n1,
                t0: self.n0,
            },
            mse: PerArm {
                t1: self.mse1,
                t0: self.mse0,
            },
            r_squared: PerArm {
                t1: self.r_squared_1,
                t0: self.r_squared_0,
            },
            warnings: &self.warnings,
            model_1: self.model(Arm::Treated),
            model_0: self.model(Arm::Control),
            regression,
        }
        .serialize(s)
    }
}

/// Potential outcomes of arm `t` for every unit: observed where `Z_i = t`,
/// predicted by `model` elsewhere.
pub fn impute(model: &FittedModel, ds: &Dataset, t: Arm) -> Result<Vec<f64>> {
    if model.arm() != t {
        return Err(Error::ArmMismatch {
            trained: model.arm(),
            requested: t,
        });
    }
    let z = ds.treatment();
    let y = ds.outcomes();
    let missing: Vec<usize> = (0..ds.n()).filter(|&i| z[i] != t.indicator()).collect();
    if model.training_indices().len() + missing.len() != ds.n() {
        return Err(Error::LengthMismatch {
            what: "model training rows vs arm size",
            expected: ds.n() - missing.len(),
            actual: model.training_indices().len(),
        });
    }
    let predicted = model.predict(&ds.covariates().select_rows(missing.iter()))?;
    let mut out = y.to_vec();
    for (&i, p) in missing.iter().zip(predicted) {
        out[i] = p;
    }
    Ok(out)
}

/// In-sample residual variance with divisor `n_t - 1`, and R-squared.
pub(crate) fn arm_summary(y: &[f64], fitted: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = models::mean(y);
    let ss_res: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    (ss_res / (n - 1.0), r2)
}

fn require_two(ds: &Dataset) -> Result<()> {
    for arm in [Arm::Treated, Arm::Control] {
        let count = ds.arm_size(arm);
        if count < 2 {
            return Err(Error::TooFewUnits {
                arm,
                count,
                required: 2,
            });
        }
    }
    Ok(())
}

/// Fits `spec1` on the treated and `spec0` on the control units, imputes the
/// missing potential outcomes and averages the imputed differences.
pub fn oaxaca_blinder(
    ds: &Dataset,
    spec1: &ModelSpec,
    spec0: &ModelSpec,
    alpha: f64,
    kind: QuantileKind,
) -> Result<AdjustedEstimate> {
    interval::check_alpha(alpha)?;
    require_two(ds)?;
    let model_1 = models::fit(spec1, &ds.arm(Arm::Treated)?)?;
    let model_0 = models::fit(spec0, &ds.arm(Arm::Control)?)?;
    let yhat1 = impute(&model_1, ds, Arm::Treated).map_err(|e| e.in_arm(Arm::Treated))?;
    let yhat0 = impute(&model_0, ds, Arm::Control).map_err(|e| e.in_arm(Arm::Control))?;
    let tau_hat = yhat1.iter().zip(&yhat0).map(|(a, b)| a - b).sum::<f64>() / ds.n() as f64;

    let y = ds.outcomes();
    let observed = |m: &FittedModel| -> Vec<f64> {
        m.training_indices().iter().map(|&i| y[i]).collect()
    };
    let (mse1, r2_1) = arm_summary(&observed(&model_1), model_1.fitted());
    let (mse0, r2_0) = arm_summary(&observed(&model_0), model_0.fitted());
    let interval = neyman_ci(tau_hat, mse1, mse0, ds.n1(), ds.n0(), alpha, kind)?;

    let mut warnings = Vec::new();
    if r2_1 > NEAR_DEGENERATE_R2 && r2_0 > NEAR_DEGENERATE_R2 {
        warnings.push(Warning::NearDegenerate);
    }
    let near_boundary = |m: &FittedModel| {
        m.family() == Family::Logistic
            && m.fitted().iter().any(|&p| {
                p < NEAR_SEPARATION_MARGIN || p > 1.0 - NEAR_SEPARATION_MARGIN
            })
    };
    if near_boundary(&model_1) || near_boundary(&model_0) {
        warnings.push(Warning::NearSeparation);
    }

    Ok(AdjustedEstimate {
        tau_hat,
        interval,
        alpha,
        quantile_kind: kind,
        mse1,
        mse0,
        r_squared_1: r2_1,
        r_squared_0: r2_0,
        n1: ds.n1(),
        n0: ds.n0(),
        warnings,
        details: Details::OaxacaBlinder {
            model_1: Box::new(model_1),
            model_0: Box::new(model_0),
        },
    })
}

/// Neyman's unadjusted estimator: the imputation estimator with a constant
/// model in each arm.
pub fn difference_in_means(ds: &Dataset, alpha: f64, kind: QuantileKind) -> Result<AdjustedEstimate> {
    let constant = ModelSpec::new(Family::Constant);
    oaxaca_blinder(ds, &constant, &constant, alpha, kind)
}

/// `mean_i [mu1(x_i) - mu0(x_i)]`, which coincides with the imputation
/// estimate when both models are prediction unbiased.
pub fn tau_projective(model1: &FittedModel, model0: &FittedModel, ds: &Dataset) -> Result<f64> {
    for m in [model1, model0] {
        if !m.prediction_unbiased() {
            return Err(Error::NotPredictionUnbiased { arm: m.arm() });
        }
    }
    let p1 = model1.predict(ds.covariates())?;
    let p0 = model0.predict(ds.covariates())?;
    Ok(p1.iter().zip(&p0).map(|(a, b)| a - b).sum::<f64>() / ds.n() as f64)
}

/// A named estimator configuration, as used by simulation plans and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorConfig {
    DifferenceInMeans {
        #[serde(default)]
        quantile: QuantileKind,
    },
    OaxacaBlinder {
        #[serde(deserialize_with = "spec_or_family")]
        spec1: ModelSpec,
        #[serde(deserialize_with = "spec_or_family")]
        spec0: ModelSpec,
        #[serde(default)]
        quantile: QuantileKind,
    },
    LinInteractions {
        #[serde(default)]
        hc: HcVariant,
    },
}

impl EstimatorConfig {
    pub fn oaxaca_blinder(family1: Family, family0: Family) -> Self {
        EstimatorConfig::OaxacaBlinder {
            spec1: family1.into(),
            spec0: family0.into(),
            quantile: QuantileKind::default(),
        }
    }

    pub fn estimate(&self, ds: &Dataset, alpha: f64) -> Result<AdjustedEstimate> {
        match self {
            EstimatorConfig::DifferenceInMeans { quantile } => difference_in_means(ds, alpha, *quantile),
            EstimatorConfig::OaxacaBlinder {
                spec1,
                spec0,
                quantile,
            } => oaxaca_blinder(ds, spec1, spec0, alpha, *quantile),
            EstimatorConfig::LinInteractions { hc } => lin_interactions(ds, alpha, *hc),
        }
    }

    /// Rejects configurations that cannot apply to any dataset.
    pub fn validate(&self) -> Result<()> {
        if let EstimatorConfig::OaxacaBlinder { spec1, spec0, .. } = self {
            spec1.solver.validate()?;
            spec0.solver.validate()?;
        }
        Ok(())
    }

    /// Model specs per arm, `None` for the interacted regression.
    pub fn specs(&self) -> Option<(ModelSpec, ModelSpec)> {
        match self {
            EstimatorConfig::DifferenceInMeans { .. } => {
                Some((Family::Constant.into(), Family::Constant.into()))
            }
            EstimatorConfig::OaxacaBlinder { spec1, spec0, .. } => Some((*spec1, *spec0)),
            EstimatorConfig::LinInteractions { .. } => None,
        }
    }
}

/// Accepts either a bare family name or a full model spec object.
fn spec_or_family<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ModelSpec, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Family(Family),
        Spec(ModelSpec),
    }
    Ok(match Repr::deserialize(d)? {
        Repr::Family(f) => f.into(),
        Repr::Spec(s) => s,
    })
}
