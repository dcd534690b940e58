//! Small numeric helpers shared by the oracle and the bound catalog.

use alloc::vec::Vec;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln(j!)` for `j = 0..=max`.
pub fn ln_factorials(max: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max as usize + 1);
    out.push(0.0);
    for j in 1..=max {
        out.push(libm::lgamma(j as f64 + 1.0));
    }
    out
}

/// `ln C(m, j)`.
pub fn ln_choose(m: u64, j: u64) -> f64 {
    debug_assert!(j <= m);
    libm::lgamma(m as f64 + 1.0) - libm::lgamma(j as f64 + 1.0) - libm::lgamma((m - j) as f64 + 1.0)
}

/// Binomial pmf `C(m, j) q^j (1-q)^(m-j)` evaluated in log space, with the
/// degenerate endpoints `q = 0` and `q = 1` handled exactly.
pub fn binomial_pmf(m: u64, j: u64, q: f64) -> f64 {
    if j > m {
        return 0.0;
    }
    if q <= 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if q >= 1.0 {
        return if j == m { 1.0 } else { 0.0 };
    }
    libm::exp(ln_choose(m, j) + j as f64 * libm::log(q) + (m - j) as f64 * libm::log1p(-q))
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `C(a + b, b)` saturating at `u128::MAX`.
pub fn choose_saturating(a_plus_b: u64, b: u64) -> u128 {
    let b = b.min(a_plus_b - b);
    let mut acc: u128 = 1;
    for i in 0..b {
        let num = (a_plus_b - i) as u128;
        acc = match acc.checked_mul(num) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
