//! Two-opinion quantities: `Y_1 ~ Bin(m, q)`, `Y_2 = m - Y_1`, `M = max(Y_1, Y_2)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::math::{ln_choose, log_add_exp, CompensatedSum};

/// Largest `m` handled by direct summation.
pub const MAX_PAIR_TRIALS: u64 = 10_000;

/// Growth kernel `g(delta, h)`: `delta (1 - delta^2)^((h-1)/2)` below
/// `1/sqrt(h)`, and the constant `(1/sqrt(h)) (1 - 1/h)^((h-1)/2)` from there on.
pub fn g_function(delta: f64, h: u64) -> f64 {
    let hf = h as f64;
    let exponent = (hf - 1.0) / 2.0;
    let knee = 1.0 / libm::sqrt(hf);
    if delta < knee {
        delta * libm::pow(1.0 - delta * delta, exponent)
    } else {
        knee * libm::pow(1.0 - 1.0 / hf, exponent)
    }
}

/// `sqrt(2m/pi) * g(2q - 1, m)`.
pub fn lemma9_bound(m: u64, q: f64) -> f64 {
    libm::sqrt(2.0 * m as f64 / core::f64::consts::PI) * g_function(2.0 * q - 1.0, m)
}

/// `Pr(Y_1 > Y_2) - Pr(Y_2 > Y_1)` by direct summation over `j > m/2` of
/// `C(m,j) (q^j (1-q)^(m-j) - q^(m-j) (1-q)^j)`.
pub fn lemma9_exact_diff(m: u64, q: f64) -> f64 {
    let (lq, lr) = (libm::log(q), libm::log1p(-q));
    let mut acc = CompensatedSum::new();
    for j in (m / 2 + 1)..=m {
        let c = ln_choose(m, j);
        let a = libm::exp(c + j as f64 * lq + (m - j) as f64 * lr);
        let b = libm::exp(c + (m - j) as f64 * lq + j as f64 * lr);
        acc.add(a);
        acc.add(-b);
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiff {
    pub threshold: u64,
    /// `Pr(Y_1 > Y_2 | M >= threshold) - Pr(Y_2 > Y_1 | M >= threshold)`
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinomialPairReport {
    pub m: u64,
    pub q: f64,
    pub diff_unconditional: f64,
    /// One entry per threshold `ceil(m/2)..=m`, ascending.
    pub diff_given_max_ge: Vec<ThresholdDiff>,
    pub lemma9_bound: f64,
}

impl BinomialPairReport {
    /// Largest decrease between consecutive thresholds (0 when monotone).
    pub fn worst_monotonicity_drop(&self) -> f64 {
        self.diff_given_max_ge
            .windows(2)
            .map(|w| w[0].diff - w[1].diff)
            .fold(0.0, f64::max)
    }
}

pub fn binomial_pair_report(m: u64, q: f64) -> Result<BinomialPairReport, OracleError> {
    if !(q > 0.5 && q < 1.0) {
        return Err(OracleError::InvalidQ(q));
    }
    if m == 0 || m > MAX_PAIR_TRIALS {
        return Err(OracleError::InvalidParameter {
            name: "m",
            value: m as f64,
        });
    }
    let (lq, lr) = (libm::log(q), libm::log1p(-q));
    let log_odds = lq - lr;
    let lowest = m.div_ceil(2);

    // Walk thresholds from m down, keeping ln Pr(M >= i) and the running
    // conditional mean of b_j = Pr(Y_1 > Y_2 | M = j) - Pr(Y_2 > Y_1 | M = j).
    let mut table = Vec::with_capacity((m - lowest + 1) as usize);
    let mut ln_tail = f64::NEG_INFINITY;
    let mut mean = 0.0;
    for j in (lowest..=m).rev() {
        let c = ln_choose(m, j);
        let (ln_mass, b) = if 2 * j == m {
            (c + j as f64 * (lq + lr), 0.0)
        } else {
            let up = c + j as f64 * lq + (m - j) as f64 * lr;
            let down = c + (m - j) as f64 * lq + j as f64 * lr;
            // (q1^d - q2^d) / (q1^d + q2^d) = tanh(d/2 * ln(q1/q2)), d = 2j - m
            (
                log_add_exp(up, down),
                libm::tanh((2 * j - m) as f64 / 2.0 * log_odds),
            )
        };
        let next = log_add_exp(ln_tail, ln_mass);
        let keep = if ln_tail == f64::NEG_INFINITY {
            0.0
        } else {
            libm::exp(ln_tail - next)
        };
        mean = mean * keep + b * libm::exp(ln_mass - next);
        ln_tail = next;
        table.push(ThresholdDiff {
            threshold: j,
            diff: mean,
        });
    }
    table.reverse();

    Ok(BinomialPairReport {
        m,
        q,
        diff_unconditional: lemma9_exact_diff(m, q),
        diff_given_max_ge: table,
        lemma9_bound: lemma9_bound(m, q),
    })
}
