//! Instance parameters, the loop-cap policy and cost guards.

use std::fmt;

use num_integer::Roots;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent bounding the degree regime of the enumeration formula:
/// `d = o(n^kappa)` with `kappa = 1/2` for `k = 3` and `1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kappa {
    Half,
    One,
}

impl Kappa {
    pub fn as_f64(self) -> f64 {
        match self {
            Kappa::Half => 0.5,
            Kappa::One => 1.0,
        }
    }
}

/// A validated `(n, d, k)` instance: `n` vertices, every vertex of degree `d`,
/// edges of size `k`, and `m = nd/k` edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub m: usize,
}

impl Params {
    pub fn new(n: usize, d: usize, k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::EdgeSizeTooSmall(k));
        }
        if n == 0 || d == 0 {
            return Err(Error::NonPositive { n, d });
        }
        if n < k {
            return Err(Error::TooFewVertices { n, k });
        }
        let nd = n * d;
        if !nd.is_multiple_of(k) {
            return Err(Error::Divisibility { nd, k });
        }
        Ok(Params { n, d, k, m: nd / k })
    }

    /// Length of a permutation, `n * d`; never zero.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.n * self.d
    }

    pub fn kappa(&self) -> Kappa {
        if self.k == 3 {
            Kappa::Half
        } else {
            Kappa::One
        }
    }

    /// True when `d >= n^kappa`, i.e. the instance sits outside the regime where
    /// the asymptotic count is claimed. Informational only.
    pub fn outside_formula_regime(&self) -> bool {
        match self.kappa() {
            Kappa::Half => self.d * self.d >= self.n,
            Kappa::One => self.d >= self.n,
        }
    }

    pub fn loop_cap(&self, policy: LPolicy) -> usize {
        policy.cap(self)
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, d={}, k={})", self.n, self.d, self.k)
    }
}

/// How the loop cap `L` of the class `E` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum LPolicy {
    /// `L = floor(sqrt(n d))`.
    #[default]
    SqrtNd,
    /// `L = k d + omega`.
    KdOmega { omega: usize },
}

impl LPolicy {
    pub fn cap(self, p: &Params) -> usize {
        match self {
            LPolicy::SqrtNd => p.len().sqrt(),
            LPolicy::KdOmega { omega } => p.k * p.d + omega,
        }
    }
}

impl fmt::Display for LPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LPolicy::SqrtNd => f.write_str("sqrt"),
            LPolicy::KdOmega { omega } => write!(f, "kd-omega:{omega}"),
        }
    }
}

impl std::str::FromStr for LPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "sqrt" {
            return Ok(LPolicy::SqrtNd);
        }
        match s.strip_prefix("kd-omega:") {
            Some(w) => match w.parse::<usize>() {
                Ok(omega) if omega > 0 => Ok(LPolicy::KdOmega { omega }),
                _ => Err(format!("omega must be a positive integer, got {w:?}")),
            },
            None => Err(format!("unknown loop-cap policy {s:?} (expected sqrt or kd-omega:<w>)")),
        }
    }
}

/// Limits on exhaustive work. Exceeding one is reported, never truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostGuard {
    /// Upper bound on `|P|` for permutation scans.
    pub max_permutations: u64,
    /// Upper bound on `C(n, k)` for the edge-set backtracking.
    pub max_subsets: u64,
}

impl Default for CostGuard {
    fn default() -> Self {
        CostGuard {
            max_permutations: 10_000_000,
            max_subsets: 10_000,
        }
    }
}
