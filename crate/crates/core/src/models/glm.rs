//! Canonical-link GLMs fitted by damped Newton iterations.
//!
//! The objective is the mean negative log-likelihood
//! `L(theta) = (1/n) sum_i [b(x_i^T theta) - y_i x_i^T theta]` with
//! `b(s) = log(1 + e^s)` (logistic) or `b(s) = e^s` (Poisson). Both are
//! convex, so halving the Newton step until the objective stops increasing
//! gives a monotone sequence of iterates.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{logistic, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{PivotedQr, RANK_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmFamily {
    Logistic,
    Poisson,
}

impl GlmFamily {
    fn mean(self, eta: f64) -> f64 {
        match self {
            GlmFamily::Logistic => logistic(eta),
            GlmFamily::Poisson => eta.exp(),
        }
    }

    // cumulant b(eta)
    fn cumulant(self, eta: f64) -> f64 {
        match self {
            GlmFamily::Logistic => eta.max(0.0) + (-eta.abs()).exp().ln_1p(),
            GlmFamily::Poisson => eta.exp(),
        }
    }

    // b''(eta)
    fn variance(self, eta: f64) -> f64 {
        match self {
            GlmFamily::Logistic => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            GlmFamily::Poisson => eta.exp(),
        }
    }

    fn link(self, mu: f64) -> f64 {
        match self {
            GlmFamily::Logistic => (mu / (1.0 - mu)).ln(),
            GlmFamily::Poisson => mu.ln(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GlmFit {
    pub family: GlmFamily,
    pub coefficients: DVector<f64>,
    pub iterations: usize,
    /// Infinity norm of the mean-loss gradient at the returned coefficients.
    pub gradient_norm: f64,
}

impl GlmFit {
    pub fn fitted(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (x * &self.coefficients)
            .iter()
            .map(|&e| self.family.mean(e))
            .collect()
    }
}

fn objective(x: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>, family: GlmFamily) -> f64 {
    let eta = x * theta;
    let total: f64 = eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| family.cumulant(e) - yi * e)
        .sum();
    total / y.len() as f64
}

fn gradient_and_hessian(
    x: &DMatrix<f64>,
    y: &[f64],
    theta: &DVector<f64>,
    family: GlmFamily,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = y.len() as f64;
    let eta = x * theta;
    let resid = DVector::from_iterator(
        y.len(),
        eta.iter().zip(y).map(|(&e, &yi)| family.mean(e) - yi),
    );
    let grad = x.tr_mul(&resid) / n;
    let mut weighted = x.clone();
    for (i, &e) in eta.iter().enumerate() {
        let w = family.variance(e);
        weighted.row_mut(i).scale_mut(w);
    }
    let hess = x.tr_mul(&weighted) / n;
    (grad, hess)
}

/// Index of a column that is identically one, if any.
fn intercept_column(x: &DMatrix<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0))
}

/// Whether the binary outcomes admit a (quasi-)separating hyperplane: a
/// nonzero `theta` with `(2 y_i - 1) x_i^T theta >= 0` for every row. For a
/// full-rank design this is exactly the case where the logistic MLE fails
/// to exist.
pub fn is_separated(x: &DMatrix<f64>, y: &[f64]) -> bool {
    let (n, p) = x.shape();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..p)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    // rows scaled to unit norm so the LP tolerances are scale free
    let mut total = vec![0.0; p];
    for i in 0..n {
        let sign = if y[i] > 0.5 { 1.0 } else { -1.0 };
        let norm = x.row(i).norm();
        if norm == 0.0 {
            continue;
        }
        let coeffs: Vec<f64> = (0..p).map(|j| sign * x[(i, j)] / norm).collect();
        for (t, c) in total.iter_mut().zip(&coeffs) {
            *t += c;
        }
        let expr: Vec<_> = vars.iter().copied().zip(coeffs).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let expr: Vec<_> = vars.iter().copied().zip(total).collect();
    lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, 1.0);
    !matches!(lp.solve(), Err(minilp::Error::Infeasible))
}

/// Maximum-likelihood fit by Newton's method with step halving.
pub fn fit_glm(
    x: &DMatrix<f64>,
    y: &[f64],
    family: GlmFamily,
    cfg: &SolverConfig,
) -> Result<GlmFit> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "design rows vs response",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    PivotedQr::new(x.clone(), RANK_TOLERANCE).require_full_rank()?;
    if family == GlmFamily::Logistic && is_separated(x, y) {
        return Err(Error::Separation);
    }
    newton(x, y, family, cfg)
}

fn newton(x: &DMatrix<f64>, y: &[f64], family: GlmFamily, cfg: &SolverConfig) -> Result<GlmFit> {
    let p = x.ncols();
    let mut theta = DVector::zeros(p);
    if let Some(j) = intercept_column(x) {
        let ybar = super::mean(y);
        let start = family.link(ybar);
        if start.is_finite() {
            theta[j] = start;
        }
    }

    let mut f = objective(x, y, &theta, family);
    for iter in 0..cfg.max_iterations {
        let (grad, hess) = gradient_and_hessian(x, y, &theta, family);
        let gnorm = grad.amax();
        // curvature is checked at every iterate, the accepted solution included
        let min_eig = SymmetricEigen::new(hess.clone()).eigenvalues.min();
        if !(min_eig >= cfg.min_hessian_eigenvalue_floor) {
            return Err(Error::IllConditionedHessian {
                eigenvalue: min_eig,
                floor: cfg.min_hessian_eigenvalue_floor,
            });
        }
        if gnorm <= cfg.gradient_tolerance {
            return finish(x, family, theta, iter, gnorm);
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                return Err(Error::IllConditionedHessian {
                    eigenvalue: min_eig,
                    floor: cfg.min_hessian_eigenvalue_floor,
                })
            }
        };

        // objective values within rounding of f count as no increase
        let slack = 8.0 * f64::EPSILON * f.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.step_halving_max {
            let candidate = &theta - &step * t;
            let fc = objective(x, y, &candidate, family);
            if fc.is_finite() && fc <= f + slack {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: iter + 1,
                gradient_norm: gnorm,
            });
        };
        theta = next;
        f = fnext;
        if family == GlmFamily::Logistic && theta.norm() > cfg.divergence_threshold {
            return Err(Error::Separation);
        }
    }

    let (grad, _) = gradient_and_hessian(x, y, &theta, family);
    let gnorm = grad.amax();
    if gnorm <= cfg.gradient_tolerance {
        return finish(x, family, theta, cfg.max_iterations, gnorm);
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations,
        gradient_norm: gnorm,
    })
}

fn finish(
    x: &DMatrix<f64>,
    family: GlmFamily,
    theta: DVector<f64>,
    iterations: usize,
    gradient_norm: f64,
) -> Result<GlmFit> {
    let fit = GlmFit {
        family,
        coefficients: theta,
        iterations,
        gradient_norm,
    };
    if family == GlmFamily::Logistic {
        let degenerate = fit
            .fitted(x)
            .iter()
            .all(|&p| p <= 1e-10 || p >= 1.0 - 1e-10);
        if degenerate {
            return Err(Error::Separation);
        }
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn with_intercept(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { xs[i] } else { 1.0 })
    }

    #[test]
    fn logistic_intercept_only_fits_sample_mean() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = [0.0, 1.0, 0.0, 1.0];
        let fit = fit_glm(&x, &y, GlmFamily::Logistic, &cfg()).unwrap();
        for p in fit.fitted(&x) {
            assert_relative_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn poisson_intercept_only_fits_sample_mean() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = [0.0, 1.0, 2.0, 3.0];
        let fit = fit_glm(&x, &y, GlmFamily::Poisson, &cfg()).unwrap();
        for m in fit.fitted(&x) {
            assert_relative_eq!(m, 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn poisson_interpolates_log_means() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let y = [1.0, E];
        // Score equations: sum_i (y_i - exp(theta^T x_i)) x_i = 0 with two
        // rows and two parameters force exp(theta^T x_i) = y_i, so
        // theta = (ln 1, ln e - ln 1) = (0, 1).
        let fit = fit_glm(&x, &y, GlmFamily::Poisson, &cfg()).unwrap();
        assert_relative_eq!(fit.coefficients[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(fit.coefficients[1], 1.0, epsilon = 1e-9);
        let mu = fit.fitted(&x);
        let score: Vec<f64> = (0..2)
            .map(|j| (0..2).map(|i| (y[i] - mu[i]) * x[(i, j)]).sum())
            .collect();
        assert!(score.iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn separable_logistic_is_detected() {
        let xs = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y: Vec<f64> = xs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let x = with_intercept(&xs);
        assert!(is_separated(&x, &y));
        assert!(matches!(
            fit_glm(&x, &y, GlmFamily::Logistic, &cfg()),
            Err(Error::Separation)
        ));
    }

    #[test]
    fn quasi_separation_and_overlap() {
        // tie at x = 0 with both labels: quasi-complete separation
        let x = with_intercept(&[-1.0, 0.0, 0.0, 1.0]);
        assert!(is_separated(&x, &[0.0, 0.0, 1.0, 1.0]));
        // one exceptional point restores overlap
        let x = with_intercept(&[-2.0, -1.0, 1.0, 2.0, 3.0]);
        assert!(!is_separated(&x, &[0.0, 1.0, 0.0, 1.0, 1.0]));
        assert!(fit_glm(&x, &[0.0, 1.0, 0.0, 1.0, 1.0], GlmFamily::Logistic, &cfg()).is_ok());
    }

    #[test]
    fn newton_alone_fails_loudly_on_separable_data() {
        let x = with_intercept(&[-2.0, -1.0, 1.0, 2.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let permissive = SolverConfig {
            min_hessian_eigenvalue_floor: 1e-300,
            gradient_tolerance: 1e-300,
            max_iterations: 10_000,
            ..cfg()
        };
        // the iterates run off to infinity; either the norm bound or the
        // vanishing curvature stops them
        assert!(matches!(
            newton(&x, &y, GlmFamily::Logistic, &permissive),
            Err(Error::IllConditionedHessian { .. } | Error::Separation)
        ));
        assert!(matches!(
            newton(&x, &y, GlmFamily::Logistic, &cfg()),
            Err(Error::IllConditionedHessian { .. } | Error::Separation)
        ));
    }

    #[test]
    fn rank_deficient_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let err = fit_glm(&x, &[0.0, 1.0, 1.0], GlmFamily::Poisson, &cfg()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn max_iterations_gives_non_convergence() {
        let x = with_intercept(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [1.0, 3.0, 2.0, 8.0, 20.0];
        let tight = SolverConfig {
            max_iterations: 1,
            ..cfg()
        };
        let err = fit_glm(&x, &y, GlmFamily::Poisson, &tight).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn high_eigenvalue_floor_is_reported() {
        let x = with_intercept(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [1.0, 0.0, 1.0, 0.0, 1.0];
        let strict = SolverConfig {
            min_hessian_eigenvalue_floor: 10.0,
            ..cfg()
        };
        let err = fit_glm(&x, &y, GlmFamily::Logistic, &strict).unwrap_err();
        assert!(matches!(err, Error::IllConditionedHessian { .. }));
    }
}
