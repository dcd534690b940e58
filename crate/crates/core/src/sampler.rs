//! Random draws used by one agent update: the multinomial sample of `h`
//! neighbours and the mode with uniform tie-break.
//!
//! Two samplers produce the same `Multinomial(h, p)` law:
//! - [`MultinomialLaw`]: sequential conditional binomials, `O(k)` per draw.
//! - [`AliasTable`]: `h` categorical draws, `O(h)` per draw after `O(k)` setup.
//!
//! [`SamplerKind::select`] picks the cheaper one per round.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::config::{NormalizedConfig, OpinionId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProb(f64),
    #[error("mode of an empty sample is undefined")]
    EmptySample,
    #[error("alias table needs at least one positive weight")]
    DegenerateWeights,
}

/// Sample counts `X_1..X_k` with `sum X_i = h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleVector {
    counts: Vec<u64>,
    h: u64,
}

impl SampleVector {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let h = counts.iter().sum();
        Self { counts, h }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn h(&self) -> u64 {
        self.h
    }

    pub fn mode_with_tiebreak<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<OpinionId, SamplerError> {
        mode_with_tiebreak(&self.counts, rng)
    }
}

/// `Binomial(trials, prob)`: inversion when the mean is below 10, BTPE
/// rejection otherwise, so the expected cost does not grow with `trials`.
pub fn draw_binomial<R: Rng + ?Sized>(
    trials: u64,
    prob: f64,
    rng: &mut R,
) -> Result<u64, SamplerError> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(SamplerError::InvalidProb(prob));
    }
    Ok(binomial_unchecked(trials, prob, rng))
}

#[inline]
fn binomial_unchecked<R: Rng + ?Sized>(trials: u64, prob: f64, rng: &mut R) -> u64 {
    if trials == 0 || prob <= 0.0 {
        return 0;
    }
    if prob >= 1.0 {
        return trials;
    }
    // prob is in (0, 1) here, so construction cannot fail.
    match Binomial::new(trials, prob) {
        Ok(b) => b.sample(rng),
        Err(_) => unreachable!("binomial parameters validated"),
    }
}

/// Precomputed conditional masses for sequential-binomial multinomial draws.
/// Shared read-only across the agents of a round.
#[derive(Debug, Clone)]
pub struct MultinomialLaw {
    probs: Vec<f64>,
    // suffix[i] = sum_{j >= i} p_j, summed from the tail to avoid cancellation
    suffix: Vec<f64>,
    last_positive: usize,
}

impl MultinomialLaw {
    pub fn new(probs: &[f64]) -> Result<Self, SamplerError> {
        if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SamplerError::InvalidProb(bad));
        }
        let mut suffix = vec![0.0; probs.len() + 1];
        for i in (0..probs.len()).rev() {
            suffix[i] = suffix[i + 1] + probs[i];
        }
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Ok(Self {
            probs: probs.to_vec(),
            suffix,
            last_positive,
        })
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// Writes one `Multinomial(h, p)` draw into `out` (length `k`).
    #[allow(clippy::needless_range_loop)]
    pub fn draw_into<R: Rng + ?Sized>(&self, h: u64, rng: &mut R, out: &mut [u64]) {
        debug_assert_eq!(out.len(), self.probs.len());
        out.iter_mut().for_each(|x| *x = 0);
        let mut remaining = h;
        for i in 0..self.probs.len() {
            if remaining == 0 {
                break;
            }
            if i == self.last_positive {
                out[i] = remaining;
                remaining = 0;
                break;
            }
            let p = self.probs[i];
            if p <= 0.0 {
                continue;
            }
            let ratio = (p / self.suffix[i]).clamp(0.0, 1.0);
            let x = binomial_unchecked(remaining, ratio, rng);
            out[i] = x;
            remaining -= x;
        }
        debug_assert_eq!(remaining, 0);
    }

    pub fn draw<R: Rng + ?Sized>(&self, h: u64, rng: &mut R) -> SampleVector {
        let mut counts = vec![0; self.probs.len()];
        self.draw_into(h, rng, &mut counts);
        SampleVector { counts, h }
    }
}

/// `Multinomial(h, p)` via sequential conditional binomials.
pub fn draw_multinomial<R: Rng + ?Sized>(
    h: u64,
    p: &NormalizedConfig,
    rng: &mut R,
) -> Result<SampleVector, SamplerError> {
    Ok(MultinomialLaw::new(p.probs())?.draw(h, rng))
}

/// Walker/Vose alias table over opinions.
#[derive(Debug, Clone)]
pub struct AliasTable {
    index: WeightedAliasIndex<f64>,
    k: usize,
}

impl AliasTable {
    pub fn new(probs: &[f64]) -> Result<Self, SamplerError> {
        if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SamplerError::InvalidProb(bad));
        }
        let index =
            WeightedAliasIndex::new(probs.to_vec()).map_err(|_| SamplerError::DegenerateWeights)?;
        Ok(Self {
            index,
            k: probs.len(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// One 0-based opinion index.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn draw_counts<R: Rng + ?Sized>(&self, h: u64, rng: &mut R) -> SampleVector {
        let mut counts = vec![0; self.k];
        for _ in 0..h {
            counts[self.sample_index(rng)] += 1;
        }
        SampleVector { counts, h }
    }
}

/// `Multinomial(h, p)` via `h` categorical draws from a shared alias table.
pub fn draw_categorical_counts<R: Rng + ?Sized>(
    h: u64,
    table: &AliasTable,
    rng: &mut R,
) -> SampleVector {
    table.draw_counts(h, rng)
}

/// Argmax of `counts` (1-based); when `m` opinions share the maximum each is
/// returned with probability `1/m` using one uniform draw in `[0, m)`.
pub fn mode_with_tiebreak<R: Rng + ?Sized>(
    counts: &[u64],
    rng: &mut R,
) -> Result<OpinionId, SamplerError> {
    let mut best = 0u64;
    let mut ties = 0usize;
    let mut first = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > best {
            best = c;
            ties = 1;
            first = i;
        } else if c == best && c > 0 {
            ties += 1;
        }
    }
    if best == 0 {
        return Err(SamplerError::EmptySample);
    }
    if ties == 1 {
        return Ok(first + 1);
    }
    let pick = rng.random_range(0..ties);
    let idx = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == best)
        .nth(pick)
        .map(|(i, _)| i)
        .unwrap_or(first);
    Ok(idx + 1)
}

/// Mode of a sample given as raw 0-based labels, with the same uniform
/// tie-break law as [`mode_with_tiebreak`]. `scratch` must have length `k`
/// and be all zero on entry; it is left all zero on exit.
pub fn mode_of_labels<R: Rng + ?Sized>(
    labels: &[usize],
    scratch: &mut [u32],
    rng: &mut R,
) -> Result<OpinionId, SamplerError> {
    if labels.is_empty() {
        return Err(SamplerError::EmptySample);
    }
    let mut best = 0u32;
    for &l in labels {
        scratch[l] += 1;
        best = best.max(scratch[l]);
    }
    // Mark each distinct label at the maximum once.
    const TIED: u32 = u32::MAX;
    let mut ties = 0usize;
    for &l in labels {
        if scratch[l] == best {
            scratch[l] = TIED;
            ties += 1;
        }
    }
    let mut pick = if ties > 1 {
        rng.random_range(0..ties)
    } else {
        0
    };
    let mut winner = labels[0];
    for &l in labels {
        if scratch[l] == TIED {
            if pick == 0 {
                winner = l;
            }
            pick = pick.wrapping_sub(1);
        }
        scratch[l] = 0;
    }
    Ok(winner + 1)
}

/// Which multinomial sampler a round uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Multinomial,
    Categorical,
}

impl SamplerKind {
    /// Sequential binomials when `k <= h`, categorical draws otherwise, so the
    /// per-agent cost is `O(min(k, h))`.
    pub fn select(k: usize, h: u64) -> Self {
        if (k as u64) <= h {
            SamplerKind::Multinomial
        } else {
            SamplerKind::Categorical
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use std::collections::HashMap;

    fn np(p: &[f64]) -> NormalizedConfig {
        NormalizedConfig::new(p.to_vec(), 100).unwrap()
    }

    #[test]
    fn binomial_degenerate() {
        let mut rng = RngHandle::new(1, 0);
        assert_eq!(draw_binomial(5, 0.0, &mut rng), Ok(0));
        assert_eq!(draw_binomial(5, 1.0, &mut rng), Ok(5));
        assert_eq!(draw_binomial(0, 0.3, &mut rng), Ok(0));
        assert_eq!(
            draw_binomial(5, 1.2, &mut rng),
            Err(SamplerError::InvalidProb(1.2))
        );
        assert!(draw_binomial(5, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn binomial_large_mean_within_three_sigma() {
        // Binomial(1e5, 0.3): mean 3e4, sd sqrt(2.1e4); sample mean of 1e4
        // draws has sd sqrt(2.1e4)/100.
        let mut rng = RngHandle::new(2, 0);
        let draws = 10_000;
        let sum: u64 = (0..draws)
            .map(|_| draw_binomial(100_000, 0.3, &mut rng).unwrap())
            .sum();
        let mean = sum as f64 / draws as f64;
        let sigma = (100_000.0f64 * 0.3 * 0.7).sqrt();
        assert!(
            (mean - 30_000.0).abs() <= 3.0 * sigma / 100.0,
            "mean {mean}"
        );
    }

    #[test]
    fn multinomial_edge_cases() {
        let mut rng = RngHandle::new(3, 0);
        let v = draw_multinomial(0, &np(&[0.5, 0.5]), &mut rng).unwrap();
        assert_eq!(v.counts(), &[0, 0]);
        let v = draw_multinomial(4, &np(&[1.0]), &mut rng).unwrap();
        assert_eq!(v.counts(), &[4]);
        let v = draw_multinomial(7, &np(&[0.0, 0.0, 1.0]), &mut rng).unwrap();
        assert_eq!(v.counts(), &[0, 0, 7]);
    }

    #[test]
    fn multinomial_coordinate_means() {
        let p = [0.5, 0.3, 0.2];
        let law = MultinomialLaw::new(&p).unwrap();
        let mut rng = RngHandle::new(4, 0);
        let draws = 100_000;
        let mut sums = [0u64; 3];
        let mut buf = [0u64; 3];
        for _ in 0..draws {
            law.draw_into(6, &mut rng, &mut buf);
            assert_eq!(buf.iter().sum::<u64>(), 6);
            for i in 0..3 {
                sums[i] += buf[i];
            }
        }
        for i in 0..3 {
            let mean = sums[i] as f64 / draws as f64;
            let sd = (6.0 * p[i] * (1.0 - p[i]) / draws as f64).sqrt();
            assert!(
                (mean - 6.0 * p[i]).abs() <= 3.0 * sd,
                "coordinate {i}: {mean}"
            );
        }
    }

    #[test]
    fn categorical_edge_cases() {
        let mut rng = RngHandle::new(5, 0);
        let t = AliasTable::new(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            draw_categorical_counts(0, &t, &mut rng).counts(),
            &[0, 0, 0]
        );
        assert_eq!(
            draw_categorical_counts(1, &t, &mut rng).counts(),
            &[0, 1, 0]
        );
    }

    /// Pearson chi-square over the joint outcome space, comparing the two
    /// samplers to each other (two-sample homogeneity test).
    fn two_sample_chi_square(
        a: &HashMap<Vec<u64>, u64>,
        b: &HashMap<Vec<u64>, u64>,
    ) -> (f64, usize) {
        let na: u64 = a.values().sum();
        let nb: u64 = b.values().sum();
        let mut keys: Vec<&Vec<u64>> = a.keys().chain(b.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut stat = 0.0;
        for key in &keys {
            let oa = *a.get(*key).unwrap_or(&0) as f64;
            let ob = *b.get(*key).unwrap_or(&0) as f64;
            let tot = oa + ob;
            let ea = tot * na as f64 / (na + nb) as f64;
            let eb = tot * nb as f64 / (na + nb) as f64;
            stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
        }
        (stat, keys.len() - 1)
    }

    fn chi2_critical(df: usize, alpha: f64) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - alpha)
    }

    #[test]
    fn categorical_matches_multinomial_law() {
        let p = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let law = MultinomialLaw::new(&p).unwrap();
        let table = AliasTable::new(&p).unwrap();
        let mut r1 = RngHandle::new(6, 0);
        let mut r2 = RngHandle::new(6, 1);
        let mut a = HashMap::new();
        let mut b = HashMap::new();
        for _ in 0..100_000 {
            *a.entry(law.draw(3, &mut r1).counts().to_vec()).or_insert(0) += 1;
            *b.entry(table.draw_counts(3, &mut r2).counts().to_vec())
                .or_insert(0) += 1;
        }
        let (stat, df) = two_sample_chi_square(&a, &b);
        assert_eq!(df, 9);
        assert!(stat < chi2_critical(df, 1e-3), "chi2 = {stat}");
    }

    #[test]
    fn mode_examples() {
        let mut rng = RngHandle::new(7, 0);
        assert_eq!(mode_with_tiebreak(&[2, 0, 0], &mut rng), Ok(1));
        assert_eq!(mode_with_tiebreak(&[0, 0, 5], &mut rng), Ok(3));
        assert_eq!(
            mode_with_tiebreak(&[0, 0], &mut rng),
            Err(SamplerError::EmptySample)
        );
    }

    #[test]
    fn two_way_tie_is_fair_coin() {
        let mut rng = RngHandle::new(8, 0);
        let trials = 100_000;
        let ones = (0..trials)
            .filter(|_| mode_with_tiebreak(&[1, 1], &mut rng).unwrap() == 1)
            .count();
        let f = ones as f64 / trials as f64;
        assert!((0.49..=0.51).contains(&f), "frequency {f}");
    }

    #[test]
    fn three_way_tie_is_uniform() {
        let mut rng = RngHandle::new(9, 0);
        let trials = 90_000;
        let mut hits = [0u32; 3];
        for _ in 0..trials {
            let m = mode_with_tiebreak(&[2, 2, 2], &mut rng).unwrap();
            hits[m - 1] += 1;
        }
        let sd = (trials as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for h in hits {
            assert!((h as f64 - trials as f64 / 3.0).abs() <= 4.0 * sd);
        }
    }

    #[test]
    fn label_mode_agrees_with_count_mode() {
        let mut rng = RngHandle::new(10, 0);
        let mut scratch = vec![0u32; 5];
        assert_eq!(mode_of_labels(&[4, 1, 4], &mut scratch, &mut rng), Ok(5));
        assert!(scratch.iter().all(|&c| c == 0));
        let trials = 60_000;
        let mut hits = [0u32; 5];
        for _ in 0..trials {
            hits[mode_of_labels(&[0, 3, 2], &mut scratch, &mut rng).unwrap() - 1] += 1;
        }
        assert_eq!(hits[1] + hits[4], 0);
        let sd = (trials as f64 * (2.0 / 9.0)).sqrt();
        for &i in &[0usize, 2, 3] {
            assert!((hits[i] as f64 - trials as f64 / 3.0).abs() <= 4.0 * sd);
        }
    }

    #[test]
    fn selection_rule() {
        assert_eq!(SamplerKind::select(3, 3), SamplerKind::Multinomial);
        assert_eq!(SamplerKind::select(64, 3), SamplerKind::Categorical);
    }

    #[test]
    fn draws_are_deterministic() {
        let law = MultinomialLaw::new(&[0.4, 0.35, 0.25]).unwrap();
        let a: Vec<_> = {
            let mut r = RngHandle::new(11, 2);
            (0..50).map(|_| law.draw(1000, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = RngHandle::new(11, 2);
            (0..50).map(|_| law.draw(1000, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn sample_sums_to_h(h in 0u64..5000, w in proptest::collection::vec(0.0f64..1.0, 1..10), seed in 0u64..1000) {
            let total: f64 = w.iter().sum();
            proptest::prop_assume!(total > 0.0);
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let mut rng = RngHandle::new(seed, 0);
            let v = MultinomialLaw::new(&p).unwrap().draw(h, &mut rng);
            proptest::prop_assert_eq!(v.counts().iter().sum::<u64>(), h);
            for (x, q) in v.counts().iter().zip(&p) {
                if *q == 0.0 { proptest::prop_assert_eq!(*x, 0); }
            }
            let t = AliasTable::new(&p).unwrap().draw_counts(h.min(200), &mut rng);
            proptest::prop_assert_eq!(t.counts().iter().sum::<u64>(), h.min(200));
        }
    }
}
