use alloc::vec::Vec;

use super::OracleError;
use crate::config::NormalizedConfig;
use crate::math::ln_factorials;

/// Log-space multinomial pmf with cached `ln p_i` and `ln j!`.
#[derive(Debug, Clone)]
pub struct PmfTable {
    h: u64,
    ln_p: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl PmfTable {
    pub fn new(h: u64, probs: &[f64]) -> Self {
        Self {
            h,
            ln_p: probs.iter().map(|&p| libm::log(p)).collect(),
            ln_fact: ln_factorials(h),
        }
    }

    pub fn h(&self) -> u64 {
        self.h
    }

    /// `ln Pr(X = x)`; `-inf` when some `x_i > 0` has `p_i = 0`.
    #[inline]
    pub fn ln_pmf(&self, x: &[u64]) -> f64 {
        let mut acc = self.ln_fact[self.h as usize];
        for (&xi, &lp) in x.iter().zip(&self.ln_p) {
            if xi == 0 {
                continue;
            }
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            acc += xi as f64 * lp - self.ln_fact[xi as usize];
        }
        acc
    }

    #[inline]
    pub fn pmf(&self, x: &[u64]) -> f64 {
        let l = self.ln_pmf(x);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            libm::exp(l)
        }
    }
}

/// `h! / prod x_i! * prod p_i^x_i`, evaluated in log space.
pub fn multinomial_pmf(x: &[u64], h: u64, p: &NormalizedConfig) -> Result<f64, OracleError> {
    check_outcome(x, h, p)?;
    Ok(PmfTable::new(h, p.probs()).pmf(x))
}

pub fn ln_multinomial_pmf(x: &[u64], h: u64, p: &NormalizedConfig) -> Result<f64, OracleError> {
    check_outcome(x, h, p)?;
    Ok(PmfTable::new(h, p.probs()).ln_pmf(x))
}

fn check_outcome(x: &[u64], h: u64, p: &NormalizedConfig) -> Result<(), OracleError> {
    if x.len() != p.k() {
        return Err(OracleError::DimensionMismatch {
            expected: p.k(),
            found: x.len(),
        });
    }
    let sum: u64 = x.iter().sum();
    if sum != h {
        return Err(OracleError::SumMismatch { sum, h });
    }
    Ok(())
}
