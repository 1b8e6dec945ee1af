//! Isotonic (monotone nondecreasing) least-squares regression.

use crate::error::{Error, Result};

/// Weighted pool-adjacent-violators: the weighted least-squares projection
/// of `y` (already ordered by the covariate) onto nondecreasing sequences.
pub fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let wt = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, l1 + l2));
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, _, len) in blocks {
        out.extend(std::iter::repeat_n(m, len));
    }
    out
}

/// A fitted monotone step-through-knots function: linear between distinct
/// training covariate values and constant beyond them.
#[derive(Clone, Debug, PartialEq)]
pub struct IsotonicFit {
    knots: Vec<f64>,
    values: Vec<f64>,
    fitted: Vec<f64>,
}

impl IsotonicFit {
    pub(crate) fn from_parts(knots: Vec<f64>, values: Vec<f64>) -> Self {
        IsotonicFit {
            knots,
            values,
            fitted: Vec::new(),
        }
    }

    /// Distinct training covariate values, increasing.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Fitted value at each knot, nondecreasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// In-sample fitted values in the original training order.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.knots, self.values)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        let last = k.len() - 1;
        if x <= k[0] {
            return v[0];
        }
        if x >= k[last] {
            return v[last];
        }
        // first knot strictly greater than x; 1 <= j <= last
        let j = k.partition_point(|&kk| kk <= x);
        let (x0, x1) = (k[j - 1], k[j]);
        let (y0, y1) = (v[j - 1], v[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Fits the isotonic regression of `y` on the scalar covariate `x`.
/// Tied covariate values are pooled first, weighted by their counts.
pub fn fit_isotonic(x: &[f64], y: &[f64]) -> Result<IsotonicFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "isotonic covariate vs outcomes",
            expected: y.len(),
            actual: x.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidSpec("isotonic regression needs at least one row".into()));
    }
    if let Some(row) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "isotonic input",
            row: row % x.len(),
        });
    }

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));

    let mut knots: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut knot_of = vec![0usize; x.len()];
    for &i in &order {
        if knots.last() != Some(&x[i]) {
            knots.push(x[i]);
            sums.push(0.0);
            weights.push(0.0);
        }
        let k = knots.len() - 1;
        sums[k] += y[i];
        weights[k] += 1.0;
        knot_of[i] = k;
    }
    let means: Vec<f64> = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    let values = pava(&means, &weights);
    let fitted = knot_of.iter().map(|&k| values[k]).collect();
    Ok(IsotonicFit {
        knots,
        values,
        fitted,
    })
}
