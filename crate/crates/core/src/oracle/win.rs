use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::enumerate::{check_guard, for_each_outcome};
use super::pmf::PmfTable;
use super::OracleError;
use crate::config::NormalizedConfig;
use crate::math::CompensatedSum;

/// Decides which opinions an agent may adopt after seeing sample `x`; the
/// agent picks uniformly among them.
pub trait WinnerRule {
    /// Writes the 0-based winner indices into `out` (cleared first).
    fn winners(&self, x: &[u64], out: &mut Vec<usize>);
}

/// The h-majority update: all opinions attaining the maximum sample count.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleMode;

impl WinnerRule for SampleMode {
    fn winners(&self, x: &[u64], out: &mut Vec<usize>) {
        out.clear();
        let best = x.iter().copied().max().unwrap_or(0);
        out.extend(
            x.iter()
                .enumerate()
                .filter(|(_, &c)| c == best)
                .map(|(i, _)| i),
        );
    }
}

/// Per-opinion winning probabilities of one agent update.
///
/// `q[i]` is `Pr(W_i)` with the uniform tie split, `q_strict[i]` requires a
/// unique maximum, `q_ties[i]` allows shared maxima. `q_strict_pair_12` is
/// the probability that the unique maximum is opinion 1 or 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinDistribution {
    pub h: u64,
    pub q: Vec<f64>,
    pub q_strict: Vec<f64>,
    pub q_ties: Vec<f64>,
    pub q_strict_pair_12: f64,
}

impl WinDistribution {
    pub fn k(&self) -> usize {
        self.q.len()
    }
}

pub fn win_distribution(h: u64, p: &NormalizedConfig) -> Result<WinDistribution, OracleError> {
    win_distribution_with(h, p, &SampleMode)
}

/// Same as [`win_distribution`] with a custom winner rule for `q`. The
/// strict and tie events always come from the raw sample counts.
pub fn win_distribution_with<W: WinnerRule + ?Sized>(
    h: u64,
    p: &NormalizedConfig,
    rule: &W,
) -> Result<WinDistribution, OracleError> {
    let k = p.k();
    check_guard(h, k)?;
    let table = PmfTable::new(h, p.probs());
    let mut q = vec![CompensatedSum::new(); k];
    let mut strict = vec![CompensatedSum::new(); k];
    let mut ties = vec![CompensatedSum::new(); k];
    let mut pair = CompensatedSum::new();
    let mut winners = Vec::with_capacity(k);
    for_each_outcome(h, k, |x| {
        let mass = table.pmf(x);
        if mass == 0.0 {
            return;
        }
        rule.winners(x, &mut winners);
        let share = mass / winners.len() as f64;
        for &i in &winners {
            q[i].add(share);
        }
        let best = x.iter().copied().max().unwrap_or(0);
        let mut n_max = 0;
        let mut arg = 0;
        for (i, &c) in x.iter().enumerate() {
            if c == best {
                ties[i].add(mass);
                n_max += 1;
                arg = i;
            }
        }
        if n_max == 1 {
            strict[arg].add(mass);
            if arg < 2 {
                pair.add(mass);
            }
        }
    })?;
    let collect = |v: Vec<CompensatedSum>| v.iter().map(CompensatedSum::value).collect();
    Ok(WinDistribution {
        h,
        q: collect(q),
        q_strict: collect(strict),
        q_ties: collect(ties),
        q_strict_pair_12: pair.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::EXACT_TOLERANCE;
    use proptest::prelude::*;

    fn np(p: &[f64]) -> NormalizedConfig {
        NormalizedConfig::new(p.to_vec(), 0).unwrap()
    }

    #[test]
    fn uniform_three_opinions_two_draws() {
        let third = 1.0 / 3.0;
        let w = win_distribution(2, &np(&[third, third, third])).unwrap();
        for i in 0..3 {
            assert!((w.q[i] - third).abs() < 1e-14);
            // only (2,0,0) is a strict win for opinion 1
            assert!((w.q_strict[i] - 1.0 / 9.0).abs() < 1e-14);
            // (2,0,0), (1,1,0), (1,0,1)
            assert!((w.q_ties[i] - 5.0 / 9.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_opinions_three_draws() {
        // Pr(Bin(3, 0.6) >= 2) = 3 * 0.36 * 0.4 + 0.216 = 0.648
        let w = win_distribution(3, &np(&[0.6, 0.4])).unwrap();
        assert!((w.q[0] - 0.648).abs() < 1e-14);
        assert!((w.q[1] - 0.352).abs() < 1e-14);
        assert!((w.q_strict_pair_12 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_opinion() {
        let w = win_distribution(4, &np(&[1.0])).unwrap();
        assert_eq!(w.q, vec![1.0]);
        assert_eq!(w.q_strict, vec![1.0]);
        assert_eq!(w.q_strict_pair_12, 1.0);
    }

    #[test]
    fn guard_propagates() {
        let p = np(&[0.1; 10]);
        assert!(matches!(
            win_distribution(500, &p),
            Err(OracleError::TooLarge { .. })
        ));
    }

    proptest! {
        #[test]
        fn mass_and_event_ordering(h in 1u64..9, w in prop::collection::vec(0.0f64..1.0, 1..5)) {
            let total: f64 = w.iter().sum();
            prop_assume!(total > 0.0);
            let p = NormalizedConfig::from_weights(&w, 0).unwrap();
            let d = win_distribution(h, &p).unwrap();
            let s: f64 = d.q.iter().sum();
            prop_assert!((s - 1.0).abs() <= EXACT_TOLERANCE);
            for i in 0..d.k() {
                prop_assert!(d.q_strict[i] <= d.q[i] + EXACT_TOLERANCE);
                prop_assert!(d.q[i] <= d.q_ties[i] + EXACT_TOLERANCE);
            }
        }
    }
}
