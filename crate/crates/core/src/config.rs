//! Configurations and bias statistics.
//!
//! Opinion ids are 1-based. A configuration is never re-sorted implicitly;
//! callers that need the descending order assumed by the analysis go through
//! [`NormalizedConfig::sorted_desc`], which returns the permutation as well.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based opinion identifier.
pub type OpinionId = usize;

/// Absolute tolerance on the total mass of a [`NormalizedConfig`].
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("opinion counts sum to {sum}, expected n = {n}")]
    SumMismatch { sum: u64, n: u64 },
    #[error("empty system: n and k must both be at least 1")]
    EmptySystem,
    #[error("probabilities sum to {sum}, expected 1")]
    MassMismatch { sum: f64 },
    #[error("probability for opinion {opinion} is {value}, outside [0, 1]")]
    InvalidProbability { opinion: OpinionId, value: f64 },
}

/// Opinion counts `c(1..k)` summing to `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration")]
pub struct Configuration {
    counts: Vec<u64>,
    n: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfiguration {
    counts: Vec<u64>,
    n: u64,
}

impl TryFrom<RawConfiguration> for Configuration {
    type Error = ConfigError;

    fn try_from(raw: RawConfiguration) -> Result<Self, Self::Error> {
        Configuration::new(raw.counts, raw.n)
    }
}

/// Checks the configuration invariants without building one.
pub fn validate(counts: &[u64], n: u64) -> Result<(), ConfigError> {
    if counts.is_empty() || n == 0 {
        return Err(ConfigError::EmptySystem);
    }
    let sum = counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .unwrap_or(u64::MAX);
    if sum != n {
        return Err(ConfigError::SumMismatch { sum, n });
    }
    Ok(())
}

impl Configuration {
    pub fn new(counts: Vec<u64>, n: u64) -> Result<Self, ConfigError> {
        validate(&counts, n)?;
        Ok(Self { counts, n })
    }

    /// Builds a configuration whose `n` is the sum of `counts`.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, ConfigError> {
        let n = counts.iter().sum();
        Self::new(counts, n)
    }

    /// All `n` agents on one opinion.
    pub fn consensus_on(k: usize, opinion: OpinionId, n: u64) -> Result<Self, ConfigError> {
        if k == 0 || n == 0 || opinion == 0 || opinion > k {
            return Err(ConfigError::EmptySystem);
        }
        let mut counts = alloc::vec![0; k];
        counts[opinion - 1] = n;
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, opinion: OpinionId) -> u64 {
        self.counts[opinion - 1]
    }

    pub fn into_counts(self) -> Vec<u64> {
        self.counts
    }

    /// `p_i = c(i) / n`, opinion order preserved.
    pub fn normalize(&self) -> NormalizedConfig {
        let n = self.n as f64;
        NormalizedConfig {
            probs: self.counts.iter().map(|&c| c as f64 / n).collect(),
            n: self.n,
        }
    }

    pub fn bias_stats(&self) -> BiasStats {
        let n = self.n;
        if self.k() == 1 {
            return BiasStats {
                plurality: Plurality::Unique(1),
                additive_bias: n,
                normalized_bias: 1.0,
                pairwise_gap: alloc::vec![0.0],
            };
        }
        let (leader, top, second) = top_two(&self.counts);
        let (plurality, additive_bias) = if top == second {
            (Plurality::Tied, 0)
        } else {
            (Plurality::Unique(leader), top - second)
        };
        let nf = n as f64;
        let top_share = top as f64 / nf;
        BiasStats {
            plurality,
            additive_bias,
            normalized_bias: additive_bias as f64 / nf,
            pairwise_gap: self
                .counts
                .iter()
                .map(|&c| top_share - c as f64 / nf)
                .collect(),
        }
    }

    /// The opinion every agent holds, if any.
    pub fn consensus(&self) -> Option<OpinionId> {
        self.counts.iter().position(|&c| c == self.n).map(|i| i + 1)
    }

    /// Number of opinions with positive support.
    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Returns (leader id, largest count, second largest count). The leader is
/// the lowest index attaining the maximum.
fn top_two(counts: &[u64]) -> (OpinionId, u64, u64) {
    let mut leader = 0;
    let mut top = 0;
    let mut second = 0;
    for (i, &c) in counts.iter().enumerate() {
        if i == 0 || c > top {
            if i > 0 {
                second = top;
            }
            top = c;
            leader = i;
        } else if c > second {
            second = c;
        }
    }
    (leader + 1, top, second)
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ") n={}", self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plurality {
    Unique(OpinionId),
    Tied,
}

impl Plurality {
    pub fn opinion(self) -> Option<OpinionId> {
        match self {
            Plurality::Unique(i) => Some(i),
            Plurality::Tied => None,
        }
    }
}

/// Bias of a configuration: `B = max count - second max count`, `delta = B / n`.
///
/// `pairwise_gap[j - 1]` is `p_leader - p_j`, the per-opinion gap to the
/// (lowest-index) largest opinion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasStats {
    pub plurality: Plurality,
    pub additive_bias: u64,
    pub normalized_bias: f64,
    pub pairwise_gap: Vec<f64>,
}

/// Opinion shares `p_1..p_k` together with the population size used by
/// threshold formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalized")]
pub struct NormalizedConfig {
    probs: Vec<f64>,
    n: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNormalized {
    probs: Vec<f64>,
    n: u64,
}

impl TryFrom<RawNormalized> for NormalizedConfig {
    type Error = ConfigError;

    fn try_from(raw: RawNormalized) -> Result<Self, Self::Error> {
        NormalizedConfig::new(raw.probs, raw.n)
    }
}

impl NormalizedConfig {
    pub fn new(probs: Vec<f64>, n: u64) -> Result<Self, ConfigError> {
        if probs.is_empty() {
            return Err(ConfigError::EmptySystem);
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::InvalidProbability {
                    opinion: i + 1,
                    value: p,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(ConfigError::MassMismatch { sum });
        }
        Ok(Self { probs, n })
    }

    /// Rescales non-negative weights to unit mass.
    // Negated comparisons so that NaN is rejected.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn from_weights(weights: &[f64], n: u64) -> Result<Self, ConfigError> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) {
            return Err(ConfigError::EmptySystem);
        }
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(ConfigError::InvalidProbability {
                opinion: i + 1,
                value: w,
            });
        }
        Self::new(weights.iter().map(|w| w / total).collect(), n)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, opinion: OpinionId) -> f64 {
        self.probs[opinion - 1]
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_sorted_desc(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] >= w[1])
    }

    /// Sorted copy (descending, stable) and the permutation back to the
    /// original ids.
    pub fn sorted_desc(&self) -> (NormalizedConfig, Relabeling) {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        let probs = order.iter().map(|&i| self.probs[i]).collect();
        (
            NormalizedConfig { probs, n: self.n },
            Relabeling {
                to_original: order.into_iter().map(|i| i + 1).collect(),
            },
        )
    }
}

/// Maps sorted positions back to original opinion ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relabeling {
    to_original: Vec<OpinionId>,
}

impl Relabeling {
    pub fn identity(k: usize) -> Self {
        Self {
            to_original: (1..=k).collect(),
        }
    }

    /// Original id of the opinion at sorted position `sorted` (1-based).
    pub fn original(&self, sorted: OpinionId) -> OpinionId {
        self.to_original[sorted - 1]
    }

    /// Reorders a per-opinion vector indexed by sorted position into original
    /// opinion order.
    pub fn restore<T: Clone>(&self, sorted_values: &[T]) -> Vec<T> {
        let mut out = sorted_values.to_vec();
        for (pos, &orig) in self.to_original.iter().enumerate() {
            out[orig - 1] = sorted_values[pos].clone();
        }
        out
    }
}
