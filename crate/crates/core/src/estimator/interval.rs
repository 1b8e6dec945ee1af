use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Critical value used for the confidence interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileKind {
    /// Standard normal `1 - alpha/2` quantile.
    Normal,
    /// Student t quantile with Welch-Satterthwaite degrees of freedom.
    #[default]
    #[serde(alias = "t")]
    TWelch,
}

impl QuantileKind {
    pub fn name(self) -> &'static str {
        match self {
            QuantileKind::Normal => "normal",
            QuantileKind::TWelch => "t_welch",
        }
    }
}

impl std::str::FromStr for QuantileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "z" => Ok(QuantileKind::Normal),
            "t" | "t_welch" | "welch" => Ok(QuantileKind::TWelch),
            _ => Err(Error::InvalidSpec(format!("unknown quantile kind `{s}`"))),
        }
    }
}

/// A symmetric interval `tau +/- quantile * standard_error`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub standard_error: f64,
    pub quantile: f64,
    /// Welch-Satterthwaite degrees of freedom, for the t interval with a
    /// nonzero variance.
    pub df: Option<f64>,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        self.quantile * self.standard_error
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha { alpha })
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return normal_quantile(p);
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom are positive")
        .inverse_cdf(p)
}

/// Welch-Satterthwaite degrees of freedom for the two-sample variance
/// `mse1/n1 + mse0/n0`. `None` when both components vanish.
pub fn welch_df(mse1: f64, mse0: f64, n1: usize, n0: usize) -> Option<f64> {
    let v1 = mse1 / n1 as f64;
    let v0 = mse0 / n0 as f64;
    let den = v1 * v1 / (n1 as f64 - 1.0) + v0 * v0 / (n0 as f64 - 1.0);
    let df = (v1 + v0).powi(2) / den;
    (den > 0.0 && df.is_finite()).then_some(df)
}

/// Interval `tau +/- q sqrt(mse1/n1 + mse0/n0)`.
pub fn neyman_ci(
    tau: f64,
    mse1: f64,
    mse0: f64,
    n1: usize,
    n0: usize,
    alpha: f64,
    kind: QuantileKind,
) -> Result<Interval> {
    check_alpha(alpha)?;
    if !(mse1 >= 0.0 && mse0 >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "MSE estimates must be nonnegative, got {mse1} and {mse0}"
        )));
    }
    if n1 < 2 || n0 < 2 {
        let (arm, count) = if n1 < 2 {
            (crate::error::Arm::Treated, n1)
        } else {
            (crate::error::Arm::Control, n0)
        };
        return Err(Error::TooFewUnits {
            arm,
            count,
            required: 2,
        });
    }
    let se = (mse1 / n1 as f64 + mse0 / n0 as f64).sqrt();
    let p = 1.0 - alpha / 2.0;
    let (quantile, df) = match kind {
        QuantileKind::Normal => (normal_quantile(p), None),
        QuantileKind::TWelch => match welch_df(mse1, mse0, n1, n0) {
            Some(df) => (t_quantile(p, df), Some(df)),
            // zero variance: the interval collapses whatever the quantile;
            // report the normal one
            None => (normal_quantile(p), None),
        },
    };
    Ok(symmetric(tau, se, quantile, df))
}

pub(crate) fn symmetric(tau: f64, se: f64, quantile: f64, df: Option<f64>) -> Interval {
    let h = quantile * se;
    Interval {
        lower: tau - h,
        upper: tau + h,
        standard_error: se,
        quantile,
        df,
    }
}
