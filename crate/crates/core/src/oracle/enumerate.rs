use alloc::vec;
use alloc::vec::Vec;

use super::OracleError;
use crate::math::choose_saturating;

/// Largest outcome space the oracle will enumerate.
pub const MAX_OUTCOMES: u128 = 100_000_000;

/// `C(h + k - 1, k - 1)`: number of count vectors of length `k` summing to `h`.
pub fn outcome_count(h: u64, k: usize) -> u128 {
    if k == 0 {
        return 0;
    }
    choose_saturating(h + k as u64 - 1, k as u64 - 1)
}

pub fn check_guard(h: u64, k: usize) -> Result<u128, OracleError> {
    let outcomes = outcome_count(h, k);
    if outcomes > MAX_OUTCOMES {
        return Err(OracleError::TooLarge { h, k, outcomes });
    }
    Ok(outcomes)
}

/// Every composition of `h` into `k` non-negative parts, once each, in
/// colexicographic order (last coordinate most significant).
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Vec<u64>,
    started: bool,
    done: bool,
}

impl Compositions {
    fn new(h: u64, k: usize) -> Self {
        let mut current = vec![0; k];
        if k > 0 {
            current[0] = h;
        }
        Self {
            current,
            started: false,
            done: k == 0,
        }
    }

    /// Advances and returns the next outcome without allocating.
    pub fn advance(&mut self) -> Option<&[u64]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.current);
        }
        // Colex successor: bump the first coordinate j >= 1 that has mass
        // before it, pour the remaining prefix mass into coordinate 0.
        let mut prefix = 0;
        let mut j = 0;
        loop {
            prefix += self.current[j];
            j += 1;
            if j == self.current.len() {
                self.done = true;
                return None;
            }
            if prefix > 0 {
                break;
            }
        }
        self.current[j] += 1;
        for x in &mut self.current[1..j] {
            *x = 0;
        }
        self.current[0] = prefix - 1;
        Some(&self.current)
    }
}

impl Iterator for Compositions {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        self.advance().map(<[u64]>::to_vec)
    }
}

pub fn enumerate_outcomes(h: u64, k: usize) -> Result<Compositions, OracleError> {
    check_guard(h, k)?;
    Ok(Compositions::new(h, k))
}

/// Calls `f` once per outcome.
pub fn for_each_outcome(h: u64, k: usize, mut f: impl FnMut(&[u64])) -> Result<(), OracleError> {
    let mut it = enumerate_outcomes(h, k)?;
    while let Some(x) = it.advance() {
        f(x);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn small_cases_in_colex_order() {
        let v: Vec<Vec<u64>> = enumerate_outcomes(2, 2).unwrap().collect();
        assert_eq!(v, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        let v: Vec<Vec<u64>> = enumerate_outcomes(1, 3).unwrap().collect();
        assert_eq!(v, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn stars_and_bars_count() {
        assert_eq!(enumerate_outcomes(4, 3).unwrap().count(), 15);
        for h in 0..8u64 {
            for k in 1..6usize {
                let all: Vec<Vec<u64>> = enumerate_outcomes(h, k).unwrap().collect();
                assert_eq!(all.len() as u128, outcome_count(h, k));
                let uniq: HashSet<_> = all.iter().cloned().collect();
                assert_eq!(uniq.len(), all.len());
                assert!(all.iter().all(|x| x.iter().sum::<u64>() == h));
                // colex: reversed vectors strictly increasing
                for w in all.windows(2) {
                    let a: Vec<u64> = w[0].iter().rev().copied().collect();
                    let b: Vec<u64> = w[1].iter().rev().copied().collect();
                    assert!(a < b);
                }
            }
        }
    }

    #[test]
    fn zero_draws_single_outcome() {
        let v: Vec<Vec<u64>> = enumerate_outcomes(0, 3).unwrap().collect();
        assert_eq!(v, vec![vec![0, 0, 0]]);
    }

    #[test]
    fn guard_rejects_huge_spaces() {
        assert!(matches!(
            enumerate_outcomes(1000, 10),
            Err(OracleError::TooLarge { .. })
        ));
        assert!(enumerate_outcomes(30, 6).is_ok());
    }
}
