//! Householder QR with column pivoting for least squares and rank detection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on `|R_kk| / |R_00|` below which a column is treated
/// as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct PivotedQr {
    // R in the upper triangle; Householder vectors are kept separately
    r: DMatrix<f64>,
    reflectors: Vec<(DVector<f64>, f64)>,
    // position k of the factorization holds original column perm[k]
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, p) = a.shape();
        let steps = m.min(p);
        let mut perm: Vec<usize> = (0..p).collect();
        let mut reflectors = Vec::with_capacity(steps);
        let mut rank = steps;
        let mut r00 = 0.0;

        for k in 0..steps {
            // pivot on the largest remaining column norm
            let (best, best_norm) = (k..p)
                .map(|j| (j, a.view((k, j), (m - k, 1)).norm()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best != k {
                a.swap_columns(k, best);
                perm.swap(k, best);
            }
            if k == 0 {
                r00 = best_norm;
            }
            if best_norm <= rel_tol * r00 || best_norm == 0.0 {
                rank = k;
                break;
            }

            let x = a.view((k, k), (m - k, 1)).clone_owned();
            let alpha = if x[0] >= 0.0 { -best_norm } else { best_norm };
            let mut v = DVector::from_iterator(m - k, x.iter().copied());
            v[0] -= alpha;
            let vtv = v.norm_squared();
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            for j in k..p {
                let mut col = a.generic_view_mut((k, j), (nalgebra::Dyn(m - k), nalgebra::Const::<1>));
                let s = beta * v.dot(&col);
                col.axpy(-s, &v, 1.0);
            }
            a[(k, k)] = alpha;
            for i in k + 1..m {
                a[(i, k)] = 0.0;
            }
            reflectors.push((v, beta));
        }

        PivotedQr {
            r: a,
            reflectors,
            perm,
            rank,
        }
    }

    #[cfg(test)]
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.perm.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols()
    }

    /// Original index of the first column judged dependent, if any.
    pub fn dependent_column(&self) -> Option<usize> {
        (!self.is_full_rank()).then(|| self.perm[self.rank])
    }

    /// Errors with `RankDeficient` unless the matrix has full column rank.
    pub fn require_full_rank(&self) -> Result<()> {
        match self.dependent_column() {
            Some(column) => Err(Error::RankDeficient { column }),
            None => Ok(()),
        }
    }

    /// `argmin_b ||A b - y||`; requires full column rank.
    pub fn solve(&self, y: &[f64]) -> Result<DVector<f64>> {
        self.require_full_rank()?;
        let p = self.ncols();
        let mut qty = DVector::from_column_slice(y);
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            let mut tail = qty.rows_mut(k, v.len());
            let s = beta * v.dot(&tail);
            tail.axpy(-s, v, 1.0);
        }
        let mut b = DVector::zeros(p);
        for k in (0..p).rev() {
            let mut acc = qty[k];
            for j in k + 1..p {
                acc -= self.r[(k, j)] * b[j];
            }
            b[k] = acc / self.r[(k, k)];
        }
        let mut out = DVector::zeros(p);
        for (k, &orig) in self.perm.iter().enumerate() {
            out[orig] = b[k];
        }
        Ok(out)
    }

    /// `(A^T A)^{-1}` in the original column order; requires full rank.
    pub fn gram_inverse(&self) -> Result<DMatrix<f64>> {
        self.require_full_rank()?;
        let p = self.ncols();
        let r = self.r.view((0, 0), (p, p)).upper_triangle();
        let rinv = r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or(Error::RankDeficient {
                column: self.perm[p - 1],
            })?;
        let permuted = &rinv * rinv.transpose();
        let mut out = DMatrix::zeros(p, p);
        for (a, &ia) in self.perm.iter().enumerate() {
            for (b, &ib) in self.perm.iter().enumerate() {
                out[(ia, ib)] = permuted[(a, b)];
            }
        }
        Ok(out)
    }
}

/// Least-squares coefficients with a full-rank check.
pub fn least_squares(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "design rows vs response",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    PivotedQr::new(x.clone(), RANK_TOLERANCE).solve(y)
}
