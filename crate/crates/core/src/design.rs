//! Complete randomization: sampling and exact enumeration of assignments.
//!
//! Every replication `r` of a study draws from its own ChaCha stream keyed by
//! `(seed, r)`, so a replicate depends only on those two numbers and not on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default upper bound on `C(n, n1)` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Environment variable overriding [`DEFAULT_ENUMERATION_CAP`].
pub const ENUM_CAP_ENV: &str = "RAND_ADJUST_ENUM_CAP";

/// A binary assignment vector with exactly `n1` treated units.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    z: Vec<bool>,
    n1: usize,
}

impl Assignment {
    /// Wraps a vector, counting the treated units.
    pub fn from_vec(z: Vec<bool>) -> Self {
        let n1 = z.iter().filter(|&&v| v).count();
        Assignment { z, n1 }
    }

    pub fn z(&self) -> &[bool] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn into_vec(self) -> Vec<bool> {
        self.z
    }
}

impl AsRef<[bool]> for Assignment {
    fn as_ref(&self) -> &[bool] {
        &self.z
    }
}

fn check_sizes(n: usize, n1: usize) -> Result<()> {
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidArmSize { n, n1 });
    }
    Ok(())
}

/// RNG for replication `replication` of a study seeded with `seed`.
pub fn stream_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Uniform draw from the `C(n, n1)` assignments, deterministic in `seed`.
pub fn sample_assignment(n: usize, n1: usize, seed: u64) -> Result<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_assignment_with(n, n1, &mut rng)
}

/// Partial Fisher-Yates: shuffle the first `n1` slots of `0..n` and treat them.
pub fn sample_assignment_with<R: Rng + ?Sized>(
    n: usize,
    n1: usize,
    rng: &mut R,
) -> Result<Assignment> {
    check_sizes(n, n1)?;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n1 {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut z = vec![false; n];
    for &i in &idx[..n1] {
        z[i] = true;
    }
    Ok(Assignment { z, n1 })
}

/// `C(n, k)` as a float; exact for every count that fits in 2^53.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at each step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => {
                let mut f = acc as f64;
                for j in i..k {
                    f = f * (n - j) as f64 / (j + 1) as f64;
                }
                return f;
            }
        }
    }
    acc as f64
}

/// Enumeration cap, honoring [`ENUM_CAP_ENV`] when it parses.
pub fn enumeration_cap() -> u64 {
    std::env::var(ENUM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ENUMERATION_CAP)
}

/// Fails with `EnumerationTooLarge` unless `C(n, n1) <= cap`.
pub fn check_enumerable(n: usize, n1: usize, cap: u64) -> Result<u64> {
    check_sizes(n, n1)?;
    let count = binomial(n, n1);
    if count > cap as f64 {
        return Err(Error::EnumerationTooLarge { n, n1, count, cap });
    }
    Ok(count as u64)
}

/// All assignments with `n1` treated units, in increasing lexicographic
/// order of `z` (with `false < true`).
pub fn enumerate_assignments(n: usize, n1: usize, cap: u64) -> Result<Vec<Assignment>> {
    let count = check_enumerable(n, n1, cap)?;
    let mut out = Vec::with_capacity(count as usize);
    out.extend(Lexicographic::new(n, n1));
    Ok(out)
}

/// Iterator behind [`enumerate_assignments`]; tracks treated positions.
#[derive(Clone, Debug)]
pub struct Lexicographic {
    n: usize,
    // treated positions, increasing; `None` once exhausted
    ones: Option<Vec<usize>>,
}

impl Lexicographic {
    pub fn new(n: usize, n1: usize) -> Self {
        let ones = (n1 <= n).then(|| (n - n1..n).collect());
        Lexicographic { n, ones }
    }
}

impl Iterator for Lexicographic {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let ones = self.ones.as_mut()?;
        let mut z = vec![false; self.n];
        for &i in ones.iter() {
            z[i] = true;
        }
        let current = Assignment {
            z,
            n1: ones.len(),
        };
        // Successor in lexicographic order of z: find the rightmost treated
        // unit that can move one step left, move it, and pack the ones to its
        // right against the end.
        let k = ones.len();
        let mut advanced = false;
        for j in (0..k).rev() {
            let lower = if j == 0 { 0 } else { ones[j - 1] + 1 };
            if ones[j] > lower {
                ones[j] -= 1;
                let mut pos = self.n - (k - j - 1);
                for slot in ones[j + 1..].iter_mut() {
                    *slot = pos;
                    pos += 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.ones = None;
        }
        Some(current)
    }
}
