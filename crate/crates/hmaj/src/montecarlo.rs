//! Sampling-based estimates of winning probabilities and the bound checks
//! built on them.

use hmaj_core::config::{Configuration, NormalizedConfig};
use hmaj_core::dynamics::{block_count, DynamicsError, RoundLaw, Stepper};
use hmaj_core::sampler::{
    mode_with_tiebreak, AliasTable, MultinomialLaw, SamplerError, SamplerKind,
};
use hmaj_core::theory::{verdict, Bound, Verdict, VerdictReport};
use hmaj_core::RngHandle;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{ratio_interval, Estimate, DEFAULT_CONFIDENCE};

/// Trials per RNG stream in [`estimate_win_probs`].
pub const TRIAL_BLOCK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum McError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("h must be at least 1")]
    ZeroSampleSize,
    #[error("shares must be sorted in descending order")]
    NotSorted,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Estimates of the per-agent events, all from the same samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinEstimates {
    pub h: u64,
    pub trials: u64,
    pub seed: u64,
    /// `Pr(W_i)` per opinion.
    pub q: Vec<Estimate>,
    pub strict_1: Estimate,
    pub ties_1: Estimate,
    pub strict_pair_12: Estimate,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    wins: Vec<u64>,
    strict_1: u64,
    ties_1: u64,
    strict_pair: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        if self.wins.is_empty() {
            return other;
        }
        for (a, b) in self.wins.iter_mut().zip(&other.wins) {
            *a += b;
        }
        self.strict_1 += other.strict_1;
        self.ties_1 += other.ties_1;
        self.strict_pair += other.strict_pair;
        self
    }
}

enum Draw {
    Multinomial(MultinomialLaw),
    Categorical(AliasTable),
}

fn run_trial_block(
    h: u64,
    draw: &Draw,
    k: usize,
    seed: u64,
    block: u64,
    trials: u64,
) -> Result<Tally, McError> {
    let mut rng = RngHandle::new(seed, block);
    let mut t = Tally {
        wins: vec![0; k],
        ..Tally::default()
    };
    let mut x = vec![0u64; k];
    for _ in 0..trials {
        match draw {
            Draw::Multinomial(law) => law.draw_into(h, &mut rng, &mut x),
            Draw::Categorical(table) => {
                x.iter_mut().for_each(|c| *c = 0);
                for _ in 0..h {
                    x[table.sample_index(&mut rng)] += 1;
                }
            }
        }
        let best = *x.iter().max().unwrap_or(&0);
        let n_max = x.iter().filter(|&&c| c == best).count();
        if x[0] == best {
            t.ties_1 += 1;
            if n_max == 1 {
                t.strict_1 += 1;
            }
        }
        if n_max == 1 && (x[0] == best || (k > 1 && x[1] == best)) {
            t.strict_pair += 1;
        }
        t.wins[mode_with_tiebreak(&x, &mut rng)? - 1] += 1;
    }
    Ok(t)
}

/// Estimates `Pr(W_i)` (plus the strict and tie events of opinion 1 and the
/// strict pair event) from `trials` independent agent updates. Trials are
/// split into blocks of [`TRIAL_BLOCK`] with one RNG stream each, so the
/// result depends only on `seed`.
pub fn estimate_win_probs(
    h: u64,
    p: &NormalizedConfig,
    trials: u64,
    seed: u64,
) -> Result<WinEstimates, McError> {
    if trials == 0 {
        return Err(McError::NoTrials);
    }
    if h == 0 {
        return Err(McError::ZeroSampleSize);
    }
    let k = p.k();
    let draw = match SamplerKind::select(k, h) {
        SamplerKind::Multinomial => Draw::Multinomial(MultinomialLaw::new(p.probs())?),
        SamplerKind::Categorical => Draw::Categorical(AliasTable::new(p.probs())?),
    };
    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let tallies: Vec<Tally> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = (trials - b * TRIAL_BLOCK).min(TRIAL_BLOCK);
            run_trial_block(h, &draw, k, seed, b, len)
        })
        .collect::<Result<_, _>>()?;
    let total = tallies.into_iter().fold(Tally::default(), Tally::merge);
    let est = |s| Estimate::new(s, trials, DEFAULT_CONFIDENCE);
    Ok(WinEstimates {
        h,
        trials,
        seed,
        q: total.wins.iter().map(|&w| est(w)).collect(),
        strict_1: est(total.strict_1),
        ties_1: est(total.ties_1),
        strict_pair_12: est(total.strict_pair),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Report {
    pub p: Vec<f64>,
    pub n: u64,
    pub c4: f64,
    pub h: u64,
    pub estimates: WinEstimates,
    /// `w1_lower`, `strict_vs_ties_lower`, `strict_pair_lower`, in that order.
    pub verdicts: Vec<VerdictReport>,
}

impl W1Report {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict == Verdict::Pass)
    }

    pub fn any_fail(&self) -> bool {
        self.verdicts.iter().any(|v| v.verdict == Verdict::Fail)
    }
}

/// `h = ceil(c4 ln(n) / p_1)`.
pub fn log_rule_h(c4: f64, n: u64, p1: f64) -> u64 {
    (Bound::HThreshold { p1, n, c4 }.value().ceil() as u64).max(1)
}

/// Checks `Pr(W_1) >= p_1/3`, `Pr(W_1,strict) >= Pr(W_1,ties)/6` and
/// `Pr(W_12,strict) >= (p_1+p_2)/36` at `h = ceil(c4 ln(n) / p_1)`.
pub fn check_w1_lower_bound(
    p: &NormalizedConfig,
    n: u64,
    c4: f64,
    trials: u64,
    seed: u64,
) -> Result<W1Report, McError> {
    if !p.is_sorted_desc() {
        return Err(McError::NotSorted);
    }
    let probs = p.probs();
    let (p1, p2) = (probs[0], probs.get(1).copied().unwrap_or(0.0));
    let h = log_rule_h(c4, n, p1);
    let estimates = estimate_win_probs(h, p, trials, seed)?;
    let verdicts = vec![
        verdict(Bound::W1Lower { p1 }, estimates.q[0].measured()),
        verdict(
            Bound::StrictVsTiesLower,
            ratio_interval(&estimates.strict_1, &estimates.ties_1),
        ),
        verdict(
            Bound::StrictPairLower { p1, p2 },
            estimates.strict_pair_12.measured(),
        ),
    ];
    Ok(W1Report {
        p: probs.to_vec(),
        n,
        c4,
        h,
        estimates,
        verdicts,
    })
}

/// Agent-level rounds with the agent blocks spread over the rayon pool.
/// Produces exactly the same configurations as the sequential stepper.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParallelStepper;

impl Stepper for ParallelStepper {
    fn next(
        &mut self,
        config: &Configuration,
        h: u64,
        round_seed: u64,
    ) -> Result<Configuration, DynamicsError> {
        let law = RoundLaw::new(config, h)?;
        let k = law.k();
        let tallies: Vec<Vec<u64>> = (0..block_count(law.n()))
            .into_par_iter()
            .map(|b| {
                let mut t = vec![0u64; k];
                law.run_block(round_seed, b, &mut t)?;
                Ok(t)
            })
            .collect::<Result<_, DynamicsError>>()?;
        let mut total = vec![0u64; k];
        for t in tallies {
            for (a, b) in total.iter_mut().zip(t) {
                *a += b;
            }
        }
        law.finish(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmaj_core::dynamics::{run, run_with, step_partitioned, RunParams};
    use hmaj_core::oracle::win_distribution;

    fn np(p: &[f64]) -> NormalizedConfig {
        NormalizedConfig::new(p.to_vec(), 0).unwrap()
    }

    #[test]
    fn point_mass() {
        let e = estimate_win_probs(5, &np(&[1.0, 0.0]), 1000, 1).unwrap();
        assert_eq!(e.q[0].point, 1.0);
        assert_eq!(e.q[1].point, 0.0);
        assert_eq!(e.strict_1.point, 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = np(&[0.5, 0.3, 0.2]);
        let a = estimate_win_probs(4, &p, 200_000, 9).unwrap();
        let b = estimate_win_probs(4, &p, 200_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_three_opinions() {
        let third = 1.0 / 3.0;
        let e = estimate_win_probs(2, &np(&[third, third, third]), 1_000_000, 3).unwrap();
        for q in &e.q {
            assert!(q.contains(third), "{q:?}");
        }
    }

    #[test]
    fn two_opinions_three_draws() {
        let e = estimate_win_probs(3, &np(&[0.6, 0.4]), 1_000_000, 4).unwrap();
        assert!(e.q[0].contains(0.648));
    }

    #[test]
    fn categorical_path_matches_oracle() {
        // k > h selects the alias-table sampler.
        let p = np(&[0.3, 0.25, 0.2, 0.15, 0.1]);
        let exact = win_distribution(3, &p).unwrap();
        let e = estimate_win_probs(3, &p, 1_000_000, 5).unwrap();
        for i in 0..5 {
            assert!(e.q[i].contains(exact.q[i]), "opinion {}", i + 1);
        }
        assert!(e.strict_1.contains(exact.q_strict[0]));
        assert!(e.ties_1.contains(exact.q_ties[0]));
        assert!(e.strict_pair_12.contains(exact.q_strict_pair_12));
    }

    #[test]
    fn single_opinion_w1_check() {
        let r = check_w1_lower_bound(&np(&[1.0]), 20, 324.0, 1000, 0).unwrap();
        assert_eq!(r.verdicts[0].verdict, Verdict::Pass);
        assert_eq!(r.estimates.q[0].point, 1.0);
    }

    #[test]
    fn log_rule() {
        // ceil(324 ln 20 / 0.5) = ceil(1941.21...)
        assert_eq!(log_rule_h(324.0, 20, 0.5), 1942);
    }

    #[test]
    fn parallel_stepper_matches_sequential() {
        let c = Configuration::from_counts(vec![9000, 6000, 5000]).unwrap();
        for seed in 0..3 {
            let a = step_partitioned(&c, 5, seed).unwrap();
            let b = ParallelStepper.next(&c, 5, seed).unwrap();
            assert_eq!(a, b);
        }
        let params = RunParams::new(5, 50, 8).unwrap();
        assert_eq!(
            run(&c, &params).unwrap(),
            run_with(&c, &params, &mut ParallelStepper).unwrap()
        );
    }
}
