//! Summary statistics over replicate draws.

use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier's compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = compensated_mean(values);
    let ss = values
        .iter()
        .map(|v| (v - m).powi(2))
        .collect::<CompensatedSum>()
        .value();
    Some((ss / (values.len() as f64 - 1.0)).sqrt())
}

/// Shape of a replicate distribution after standardizing by its own mean
/// and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shape {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov-Smirnov distance to the standard normal.
    pub ks_distance: f64,
}

/// `None` for fewer than three values or zero spread.
pub fn shape(values: &[f64]) -> Option<Shape> {
    if values.len() < 3 {
        return None;
    }
    let n = values.len() as f64;
    let m = compensated_mean(values);
    let central = |k: i32| {
        values
            .iter()
            .map(|v| (v - m).powi(k))
            .collect::<CompensatedSum>()
            .value()
            / n
    };
    let m2 = central(2);
    if !(m2 > 0.0) {
        return None;
    }
    let skewness = central(3) / m2.powf(1.5);
    let excess_kurtosis = central(4) / (m2 * m2) - 3.0;

    let sd = sample_sd(values)?;
    let mut z: Vec<f64> = values.iter().map(|v| (v - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    Some(Shape {
        skewness,
        excess_kurtosis,
        ks_distance: ks_normal(&z),
    })
}

/// KS distance between the empirical distribution of sorted `z` and N(0, 1).
pub fn ks_normal(sorted: &[f64]) -> f64 {
    let normal = Normal::standard();
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
