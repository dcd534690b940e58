//! Closed-form bounds and thresholds of the convergence analysis, and
//! verdicts comparing them with exact or estimated values.
//!
//! Every bound here is a lower bound on some measured quantity. Logarithms
//! are natural.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Configuration, NormalizedConfig, OpinionId};
use crate::oracle::{g_function, EXACT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("unknown bound `{0}`")]
    UnknownBound(String),
    #[error("bound `{bound}` needs parameter `{param}`")]
    MissingParameter {
        bound: &'static str,
        param: &'static str,
    },
    #[error("opinion {0} fits none of the growth classes")]
    UnclassifiedOpinion(OpinionId),
    #[error("opinion {opinion} is not in class {class:?}")]
    Misclassified {
        opinion: OpinionId,
        class: GrowthClass,
    },
    #[error("expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shares must be sorted in descending order")]
    NotSorted,
    #[error("opinion {opinion} is outside 1..={k}")]
    UnknownOpinion { opinion: OpinionId, k: usize },
}

/// Default constants: `C_2 = 1/2`, `C_3 = 3` (so `C_4 = 324`), `C_6 = 0.05`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c2: f64,
    pub c3: f64,
    pub c6: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c2: 0.5,
            c3: 3.0,
            c6: 0.05,
        }
    }
}

impl Constants {
    /// `C_4 = (3 C_3 / (1 - C_2))^2`
    pub fn c4(&self) -> f64 {
        let r = 3.0 * self.c3 / (1.0 - self.c2);
        r * r
    }
}

/// A bound together with its instance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "bound", content = "params", rename_all = "snake_case")]
pub enum Bound {
    /// `sqrt(2m/pi) g(delta, m)` on `Pr(Y_1 > Y_2) - Pr(Y_2 > Y_1)`.
    Lemma9Lower { m: u64, delta: f64 },
    /// `C_1 min(sqrt(m) (2q - 1), 1)` on the max-conditional two-opinion gap.
    ReductionLower { m: u64, q: f64, c1: f64 },
    /// `p_1 / 3` on `Pr(W_1)`.
    W1Lower { p1: f64 },
    /// `1/6` on `Pr(W_1,strict) / Pr(W_1,ties)`.
    StrictVsTiesLower,
    /// `(p_1 + p_2) / 36` on `Pr(W_12,strict)`.
    StrictPairLower { p1: f64, p2: f64 },
    /// `C min((p_1 - p_2) sqrt(h) / sqrt(2 (p_1 + p_2)), 1)` on the
    /// conditional gap `Pr(W_1 | W12s) - Pr(W_2 | W12s)`.
    CondDiffLower { p1: f64, p2: f64, h: u64, c: f64 },
    /// `C_5 delta(j) sqrt(h / (p_1 + p_2)) Pr(W_1)` on `Pr(W_1) - Pr(W_j)`.
    UncondDiffLower {
        delta_j: f64,
        h: u64,
        p1: f64,
        p2: f64,
        c5: f64,
        w1: f64,
    },
    /// `Pr(W_j) / (1 - C_6)` on `Pr(W_1)`.
    RatioRegime { c6: f64, wj: f64 },
    /// `lambda_1 sqrt(p_1 / n)` on the normalized bias.
    BiasThreshold { p1: f64, n: u64, lambda1: f64 },
    /// `C_4 ln(n) / p_1` on `h`.
    HThreshold { p1: f64, n: u64, c4: f64 },
    /// `1 - n^-(C_3 - 2)` on the probability that opinion 1 out-samples every
    /// `C_2`-rare opinion, valid once `h p_1 > C_4 ln n`.
    WeakOpinion { c2: f64, c3: f64, n: u64 },
}

impl Bound {
    pub const NAMES: [&'static str; 11] = [
        "lemma9_lower",
        "reduction_lower",
        "w1_lower",
        "strict_vs_ties_lower",
        "strict_pair_lower",
        "cond_diff_lower",
        "uncond_diff_lower",
        "ratio_regime",
        "bias_threshold",
        "h_threshold",
        "weak_opinion",
    ];

    pub fn name(&self) -> &'static str {
        let i = match self {
            Bound::Lemma9Lower { .. } => 0,
            Bound::ReductionLower { .. } => 1,
            Bound::W1Lower { .. } => 2,
            Bound::StrictVsTiesLower => 3,
            Bound::StrictPairLower { .. } => 4,
            Bound::CondDiffLower { .. } => 5,
            Bound::UncondDiffLower { .. } => 6,
            Bound::RatioRegime { .. } => 7,
            Bound::BiasThreshold { .. } => 8,
            Bound::HThreshold { .. } => 9,
            Bound::WeakOpinion { .. } => 10,
        };
        Self::NAMES[i]
    }

    pub fn value(&self) -> f64 {
        match *self {
            Bound::Lemma9Lower { m, delta } => {
                libm::sqrt(2.0 * m as f64 / PI) * g_function(delta, m)
            }
            Bound::ReductionLower { m, q, c1 } => {
                c1 * (libm::sqrt(m as f64) * (2.0 * q - 1.0)).min(1.0)
            }
            Bound::W1Lower { p1 } => p1 / 3.0,
            Bound::StrictVsTiesLower => 1.0 / 6.0,
            Bound::StrictPairLower { p1, p2 } => (p1 + p2) / 36.0,
            Bound::CondDiffLower { p1, p2, h, c } => {
                c * ((p1 - p2) * libm::sqrt(h as f64) / libm::sqrt(2.0 * (p1 + p2))).min(1.0)
            }
            Bound::UncondDiffLower {
                delta_j,
                h,
                p1,
                p2,
                c5,
                w1,
            } => c5 * delta_j * libm::sqrt(h as f64 / (p1 + p2)) * w1,
            Bound::RatioRegime { c6, wj } => wj / (1.0 - c6),
            Bound::BiasThreshold { p1, n, lambda1 } => lambda1 * libm::sqrt(p1 / n as f64),
            Bound::HThreshold { p1, n, c4 } => c4 * libm::log(n as f64) / p1,
            Bound::WeakOpinion { c3, n, .. } => 1.0 - libm::pow(n as f64, -(c3 - 2.0)),
        }
    }

    /// Builds a bound from its name and named parameters.
    pub fn from_params(name: &str, params: &[(&str, f64)]) -> Result<Bound, TheoryError> {
        let bound = Self::NAMES
            .iter()
            .copied()
            .find(|&n| n == name)
            .ok_or_else(|| TheoryError::UnknownBound(name.to_string()))?;
        let get = |param: &'static str| {
            params
                .iter()
                .find(|(k, _)| *k == param)
                .map(|&(_, v)| v)
                .ok_or(TheoryError::MissingParameter { bound, param })
        };
        let int = |param: &'static str| get(param).map(|v| v as u64);
        Ok(match bound {
            "lemma9_lower" => Bound::Lemma9Lower {
                m: int("m")?,
                delta: get("delta")?,
            },
            "reduction_lower" => Bound::ReductionLower {
                m: int("m")?,
                q: get("q")?,
                c1: get("c1")?,
            },
            "w1_lower" => Bound::W1Lower { p1: get("p1")? },
            "strict_vs_ties_lower" => Bound::StrictVsTiesLower,
            "strict_pair_lower" => Bound::StrictPairLower {
                p1: get("p1")?,
                p2: get("p2")?,
            },
            "cond_diff_lower" => Bound::CondDiffLower {
                p1: get("p1")?,
                p2: get("p2")?,
                h: int("h")?,
                c: get("c")?,
            },
            "uncond_diff_lower" => Bound::UncondDiffLower {
                delta_j: get("delta_j")?,
                h: int("h")?,
                p1: get("p1")?,
                p2: get("p2")?,
                c5: get("c5")?,
                w1: get("w1")?,
            },
            "ratio_regime" => Bound::RatioRegime {
                c6: get("c6")?,
                wj: get("wj")?,
            },
            "bias_threshold" => Bound::BiasThreshold {
                p1: get("p1")?,
                n: int("n")?,
                lambda1: get("lambda1")?,
            },
            "h_threshold" => Bound::HThreshold {
                p1: get("p1")?,
                n: int("n")?,
                c4: get("c4")?,
            },
            _ => Bound::WeakOpinion {
                c2: get("c2")?,
                c3: get("c3")?,
                n: int("n")?,
            },
        })
    }
}

/// A measured value: exact (oracle) or a confidence interval (Monte Carlo).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measured {
    Exact(f64),
    Interval { low: f64, point: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Lower-bound verdict. Exact values pass within [`EXACT_TOLERANCE`];
/// intervals pass when entirely at or above the bound, fail when entirely
/// below it, and are inconclusive when they straddle it.
pub fn compare(measured: Measured, bound_value: f64) -> Verdict {
    match measured {
        Measured::Exact(v) => {
            if v >= bound_value - EXACT_TOLERANCE {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        Measured::Interval { low, high, .. } => {
            if low >= bound_value {
                Verdict::Pass
            } else if high < bound_value {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    #[serde(flatten)]
    pub bound: Bound,
    pub measured: Measured,
    pub bound_value: f64,
    pub verdict: Verdict,
}

pub fn verdict(bound: Bound, measured: Measured) -> VerdictReport {
    let bound_value = bound.value();
    VerdictReport {
        bound,
        measured,
        bound_value,
        verdict: compare(measured, bound_value),
    }
}

/// [`verdict`] with the bound looked up by name.
pub fn verdict_by_name(
    name: &str,
    params: &[(&str, f64)],
    measured: Measured,
) -> Result<VerdictReport, TheoryError> {
    Ok(verdict(Bound::from_params(name, params)?, measured))
}

/// How an opinion `j != 1` changed over one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthClass {
    /// `delta(j)' > delta(j)`
    I,
    /// `p'_j / p'_1 < p_j / p_1`
    J,
    /// `p'_j = 0`
    K,
}

fn in_class(before: &Configuration, after: &Configuration, j: usize, class: GrowthClass) -> bool {
    // Both configurations have the same n, so shares compare as counts.
    let (c1, cj) = (before.counts()[0] as u128, before.counts()[j] as u128);
    let (d1, dj) = (after.counts()[0] as u128, after.counts()[j] as u128);
    match class {
        GrowthClass::I => d1 + cj > c1 + dj,
        GrowthClass::J => c1 > 0 && d1 > 0 && dj * c1 < cj * d1,
        GrowthClass::K => dj == 0,
    }
}

fn check_pair(before: &Configuration, after: &Configuration) -> Result<(), TheoryError> {
    if before.k() != after.k() {
        return Err(TheoryError::DimensionMismatch {
            expected: before.k(),
            found: after.k(),
        });
    }
    if before.n() != after.n() {
        return Err(TheoryError::DimensionMismatch {
            expected: before.n() as usize,
            found: after.n() as usize,
        });
    }
    Ok(())
}

/// Class of every opinion `2..=k` (index 0 is opinion 2), trying `K`, then
/// `I`, then `J`.
pub fn classify_growth(
    before: &Configuration,
    after: &Configuration,
) -> Result<Vec<Option<GrowthClass>>, TheoryError> {
    check_pair(before, after)?;
    Ok((1..before.k())
        .map(|j| {
            [GrowthClass::K, GrowthClass::I, GrowthClass::J]
                .into_iter()
                .find(|&c| in_class(before, after, j, c))
        })
        .collect())
}

/// Checks `p'_1 > p_1` given a partition of opinions `2..=k` into `I`, `J`
/// and `K`. Each class is verified with exact integer arithmetic first.
pub fn p1_growth_audit(
    before: &Configuration,
    after: &Configuration,
    classes: &[Option<GrowthClass>],
) -> Result<Verdict, TheoryError> {
    check_pair(before, after)?;
    if classes.len() + 1 != before.k() {
        return Err(TheoryError::DimensionMismatch {
            expected: before.k() - 1,
            found: classes.len(),
        });
    }
    for (idx, class) in classes.iter().enumerate() {
        let j = idx + 1;
        match class {
            None => return Err(TheoryError::UnclassifiedOpinion(j + 1)),
            Some(c) if !in_class(before, after, j, *c) => {
                return Err(TheoryError::Misclassified {
                    opinion: j + 1,
                    class: *c,
                })
            }
            Some(_) => {}
        }
    }
    Ok(if after.counts()[0] > before.counts()[0] {
        Verdict::Pass
    } else {
        Verdict::Fail
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SmallBias,
    MidBias,
    LargeBias,
}

/// Regime of a gap `delta_j = p_1 - p_j`: large when
/// `delta_j >= (1 - 1/(1 + C_6)) p_1`, otherwise small when
/// `delta_j < sqrt(2 (p_1 + p_2) / h)`, otherwise mid.
pub fn regime_of(delta_j: f64, p1: f64, p2: f64, h: u64, c6: f64) -> Regime {
    if delta_j >= (1.0 - 1.0 / (1.0 + c6)) * p1 {
        Regime::LargeBias
    } else if delta_j < small_bias_boundary(p1, p2, h) {
        Regime::SmallBias
    } else {
        Regime::MidBias
    }
}

/// `sqrt(2 (p_1 + p_2) / h)`
pub fn small_bias_boundary(p1: f64, p2: f64, h: u64) -> f64 {
    libm::sqrt(2.0 * (p1 + p2) / h as f64)
}

pub fn regime_classifier(
    p: &NormalizedConfig,
    h: u64,
    j: OpinionId,
    c6: f64,
) -> Result<Regime, TheoryError> {
    if !p.is_sorted_desc() {
        return Err(TheoryError::NotSorted);
    }
    if j == 0 || j > p.k() {
        return Err(TheoryError::UnknownOpinion {
            opinion: j,
            k: p.k(),
        });
    }
    let probs = p.probs();
    let p2 = probs.get(1).copied().unwrap_or(0.0);
    Ok(regime_of(probs[0] - probs[j - 1], probs[0], p2, h, c6))
}
