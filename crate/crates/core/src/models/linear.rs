//! Least-squares fits and the two calibration devices for arbitrary base
//! predictors: subtracting the training bias, and a second-stage simple
//! regression of the outcome on the base prediction.

use nalgebra::{DMatrix, DVector};

use super::Family;
use crate::error::{Error, Result};
use crate::linalg::least_squares;

pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    least_squares(x, y)
}

/// OLS of `ln y` on `x`.
pub fn fit_log_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    Family::LogOlsDebiased.check_outcomes(y)?;
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    least_squares(x, &logs)
}

/// Mean training bias `mean(base - y)`. Subtracting it from the base
/// predictor makes it prediction unbiased.
pub fn debias(base: &[f64], y: &[f64]) -> f64 {
    assert_eq!(base.len(), y.len());
    base.iter().zip(y).map(|(b, v)| b - v).sum::<f64>() / y.len() as f64
}

/// Intercept and slope of the simple regression of `y` on `base`.
pub fn calibrate_ols2(base: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    assert_eq!(base.len(), y.len());
    let n = y.len() as f64;
    let mb = base.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = base.iter().map(|b| (b - mb).powi(2)).sum();
    let scale = base.iter().map(|b| b.abs()).fold(0.0, f64::max);
    if sxx <= (1e-12 * scale).powi(2) * n {
        return Err(Error::DegenerateCalibration);
    }
    let sxy: f64 = base.iter().zip(y).map(|(b, v)| (b - mb) * (v - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mb, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn ols_interpolates_two_points() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let b = fit_ols(&x, &[1.0, 2.0]).unwrap();
        assert_relative_eq!(b[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(b[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_ols_is_mean() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let b = fit_ols(&x, &[0.0, 2.0]).unwrap();
        assert_relative_eq!(b[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(matches!(
            fit_ols(&x, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient { column: 1 })
        ));
    }

    #[test]
    fn log_ols_cases() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let t = fit_log_ols(&x, &[E, E * E]).unwrap();
        assert_relative_eq!(t[0], 1.0, epsilon = 1e-12);

        let ones = DMatrix::from_element(2, 1, 1.0);
        let t = fit_log_ols(&ones, &[E, E.powi(3)]).unwrap();
        assert_relative_eq!(t[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(t[0].exp(), E * E, epsilon = 1e-12);

        assert_eq!(
            fit_log_ols(&x, &[1.0, 0.0]).unwrap_err().code(),
            "OUTCOME_DOMAIN_ERROR"
        );
    }

    #[test]
    fn debias_cases() {
        assert_eq!(debias(&[10.0, 10.0], &[7.0, 9.0]), 2.0);
        assert_eq!(debias(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let a = debias(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert_eq!(a, 2.0);
        let corrected: Vec<f64> = [2.0, 4.0, 6.0].iter().map(|b| b - a).collect();
        assert_eq!(corrected, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn calibration_cases() {
        let (b0, b1) = calibrate_ols2(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(b0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(b1, 0.5, epsilon = 1e-12);
        let (b0, b1) = calibrate_ols2(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert_relative_eq!(b0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(b1, 1.0, epsilon = 1e-12);
        assert!(matches!(
            calibrate_ols2(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateCalibration)
        ));
    }
}
