//! Regression of the outcome on treatment, centered covariates and their
//! interactions, with heteroskedasticity-consistent standard errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::interval::{check_alpha, normal_quantile, symmetric};
use super::{arm_summary, AdjustedEstimate, Details};
use crate::dataset::Dataset;
use crate::error::{Arm, Error, Result};
use crate::linalg::{PivotedQr, RANK_TOLERANCE};

/// Leverages at or above `1 - LEVERAGE_TOLERANCE` count as 1.
const LEVERAGE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HcVariant {
    Hc0,
    Hc2,
    #[default]
    Hc3,
}

impl HcVariant {
    pub fn name(self) -> &'static str {
        match self {
            HcVariant::Hc0 => "hc0",
            HcVariant::Hc2 => "hc2",
            HcVariant::Hc3 => "hc3",
        }
    }

    fn weight(self, leverage: f64) -> f64 {
        match self {
            HcVariant::Hc0 => 1.0,
            HcVariant::Hc2 => 1.0 / (1.0 - leverage),
            HcVariant::Hc3 => (1.0 - leverage).powi(-2),
        }
    }
}

impl std::str::FromStr for HcVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hc0" => Ok(HcVariant::Hc0),
            "hc2" => Ok(HcVariant::Hc2),
            "hc3" => Ok(HcVariant::Hc3),
            _ => Err(Error::InvalidSpec(format!("unknown HC variant `{s}`"))),
        }
    }
}

/// Least-squares fit with a sandwich covariance matrix.
#[derive(Clone, Debug)]
pub struct RobustFit {
    pub coefficients: DVector<f64>,
    pub residuals: Vec<f64>,
    pub leverages: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

/// OLS of `y` on `x` with covariance
/// `(X'X)^-1 X' diag(w_i e_i^2) X (X'X)^-1`.
pub fn robust_ols(x: &DMatrix<f64>, y: &[f64], hc: HcVariant) -> Result<RobustFit> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "design rows vs response",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let qr = PivotedQr::new(x.clone(), RANK_TOLERANCE);
    let coefficients = qr.solve(y)?;
    let gram_inv = qr.gram_inverse()?;
    let fitted = x * &coefficients;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();

    let xg = x * &gram_inv;
    let leverages: Vec<f64> = (0..x.nrows())
        .map(|i| xg.row(i).dot(&x.row(i)))
        .collect();
    if hc != HcVariant::Hc0 {
        if let Some(row) = leverages.iter().position(|&h| h >= 1.0 - LEVERAGE_TOLERANCE) {
            return Err(Error::UnitLeverage { row });
        }
    }

    // meat = X' diag(w e^2) X, accumulated as scaled rows
    let mut scaled = x.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= hc.weight(leverages[i]) * residuals[i] * residuals[i];
    }
    let meat = x.transpose() * scaled;
    let covariance = &gram_inv * meat * &gram_inv;
    Ok(RobustFit {
        coefficients,
        residuals,
        leverages,
        covariance,
    })
}

/// Design `[1, Z, Xc, Z * Xc]` with the non-intercept covariates centered
/// at their full-sample means.
pub fn interaction_design(ds: &Dataset) -> DMatrix<f64> {
    let n = ds.n();
    let k = free_covariates(ds);
    let x = ds.covariates();
    let mut design = DMatrix::zeros(n, 2 + 2 * k);
    for j in 0..k {
        let m = x.column(j).mean();
        for i in 0..n {
            let c = x[(i, j)] - m;
            design[(i, 2 + j)] = c;
            if ds.treatment()[i] {
                design[(i, 2 + k + j)] = c;
            }
        }
    }
    for i in 0..n {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = f64::from(u8::from(ds.treatment()[i]));
    }
    design
}

fn free_covariates(ds: &Dataset) -> usize {
    ds.d() - usize::from(ds.has_intercept())
}

/// Coefficient on treatment in the fully interacted regression, with a
/// normal-quantile interval from the chosen HC sandwich.
pub fn lin_interactions(ds: &Dataset, alpha: f64, hc: HcVariant) -> Result<AdjustedEstimate> {
    check_alpha(alpha)?;
    let k = free_covariates(ds);
    for arm in [Arm::Treated, Arm::Control] {
        let count = ds.arm_size(arm);
        if count < k + 2 {
            return Err(Error::TooFewUnits {
                arm,
                count,
                required: k + 2,
            });
        }
    }
    let design = interaction_design(ds);
    let fit = robust_ols(&design, ds.outcomes(), hc).map_err(|e| match e {
        // name the offending covariate rather than the design column
        Error::RankDeficient { column } if column >= 2 => Error::RankDeficient {
            column: (column - 2) % k.max(1),
        },
        other => other,
    })?;

    let tau = fit.coefficients[1];
    let se = fit.covariance[(1, 1)].max(0.0).sqrt();
    let ci = symmetric(tau, se, normal_quantile(1.0 - alpha / 2.0), None);

    let z = ds.treatment();
    let y = ds.outcomes();
    let per_arm = |arm: Arm| {
        let rows: Vec<usize> = (0..ds.n()).filter(|&i| z[i] == arm.indicator()).collect();
        let yt: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let ft: Vec<f64> = rows.iter().map(|&i| y[i] - fit.residuals[i]).collect();
        arm_summary(&yt, &ft)
    };
    let (mse1, r2_1) = per_arm(Arm::Treated);
    let (mse0, r2_0) = per_arm(Arm::Control);

    Ok(AdjustedEstimate {
        tau_hat: tau,
        interval: ci,
        alpha,
        quantile_kind: super::QuantileKind::Normal,
        mse1,
        mse0,
        r_squared_1: r2_1,
        r_squared_0: r2_0,
        n1: ds.n1(),
        n0: ds.n0(),
        warnings: Vec::new(),
        details: Details::LinInteractions {
            hc,
            coefficients: fit.coefficients.iter().copied().collect(),
        },
    })
}
