//! Bernoulli estimates with Wilson score intervals.

use hmaj_core::theory::Measured;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub const DEFAULT_CONFIDENCE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub successes: u64,
    pub trials: u64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub confidence: f64,
}

impl Estimate {
    /// Panics if `trials == 0` or `successes > trials`.
    pub fn new(successes: u64, trials: u64, confidence: f64) -> Self {
        assert!(
            trials > 0 && successes <= trials,
            "{successes} successes in {trials} trials"
        );
        let point = successes as f64 / trials as f64;
        let (low, high) = wilson_interval(successes, trials, confidence);
        Self {
            point,
            successes,
            trials,
            wilson_low: low.min(point),
            wilson_high: high.max(point),
            confidence,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.wilson_low <= value && value <= self.wilson_high
    }

    pub fn measured(&self) -> Measured {
        Measured::Interval {
            low: self.wilson_low,
            point: self.point,
            high: self.wilson_high,
        }
    }
}

/// Two-sided normal quantile for `confidence`.
pub fn z_value(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_value(confidence);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Conservative interval for `a / b` from intervals on `a` and `b`.
pub fn ratio_interval(num: &Estimate, den: &Estimate) -> Measured {
    let point = if den.point > 0.0 {
        num.point / den.point
    } else {
        f64::NAN
    };
    let low = if den.wilson_high > 0.0 {
        num.wilson_low / den.wilson_high
    } else {
        0.0
    };
    let high = if den.wilson_low > 0.0 {
        num.wilson_high / den.wilson_low
    } else {
        f64::INFINITY
    };
    Measured::Interval { low, point, high }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmaj_core::sampler::draw_binomial;
    use hmaj_core::RngHandle;

    #[test]
    fn z_at_999() {
        assert!((z_value(0.999) - 3.290527).abs() < 1e-5);
    }

    #[test]
    fn degenerate_counts() {
        let all = Estimate::new(10, 10, DEFAULT_CONFIDENCE);
        assert_eq!(all.point, 1.0);
        assert_eq!(all.wilson_high, 1.0);
        assert!(all.wilson_low < 1.0);
        let none = Estimate::new(0, 10, DEFAULT_CONFIDENCE);
        assert_eq!(none.wilson_low, 0.0);
    }

    #[test]
    fn ratio_bounds() {
        let a = Estimate::new(300, 1000, 0.999);
        let b = Estimate::new(600, 1000, 0.999);
        match ratio_interval(&a, &b) {
            Measured::Interval { low, point, high } => {
                assert!((point - 0.5).abs() < 1e-15);
                assert!(low < point && point < high);
            }
            Measured::Exact(_) => unreachable!(),
        }
    }

    #[test]
    fn coverage_battery() {
        // 99.9% intervals must cover the truth in at least 99.8% of repetitions.
        let reps = 10_000;
        let trials = 2000;
        for (i, &p) in [0.01, 0.1, 0.5].iter().enumerate() {
            let mut rng = RngHandle::new(2024, i as u64);
            let covered = (0..reps)
                .filter(|_| {
                    let s = draw_binomial(trials, p, &mut rng).unwrap();
                    Estimate::new(s, trials, DEFAULT_CONFIDENCE).contains(p)
                })
                .count();
            assert!(covered as f64 >= 0.998 * reps as f64, "p = {p}: {covered}");
        }
    }
}
