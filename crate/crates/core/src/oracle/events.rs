//! Conditional quantities around the event `W_{1,2,strict}` that the unique
//! sample maximum belongs to opinion 1 or opinion 2.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::enumerate::{check_guard, for_each_outcome};
use super::pmf::PmfTable;
use super::win::{SampleMode, WinnerRule};
use super::OracleError;
use crate::config::{NormalizedConfig, OpinionId};
use crate::math::{binomial_pmf, CompensatedSum};

/// Exact values of the conditional quantities for one `(h, p)` instance.
/// Conditional fields are `None` when `Pr(W_{1,2,strict}) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub h: u64,
    pub p: Vec<f64>,
    pub rare_x: f64,
    /// `Pr(W_1 | W12s) - Pr(W_2 | W12s)`
    pub cond_diff_majority: Option<f64>,
    /// `Pr(X_1 > X_2 | W12s) - Pr(X_2 > X_1 | W12s)`
    pub cond_diff_comparison: Option<f64>,
    /// `h (p_1 + p_2) / 2`
    pub sum_threshold: f64,
    /// `Pr(X_1 + X_2 >= t | W12s)`
    pub sum_tail_conditional: Option<f64>,
    /// `Pr(X_1 + X_2 >= t)`
    pub sum_tail_unconditional: f64,
    pub strict_pair_12: f64,
    pub rare_set: Vec<OpinionId>,
    pub strong_set: Vec<OpinionId>,
    /// `Pr(W_1) - Pr(W_2)`
    pub unconditional_diff: f64,
}

pub fn event_report(h: u64, p: &NormalizedConfig, rare_x: f64) -> Result<EventReport, OracleError> {
    event_report_with(h, p, rare_x, &SampleMode)
}

fn check_sorted_pair(p: &NormalizedConfig) -> Result<(), OracleError> {
    if p.k() < 2 {
        return Err(OracleError::TooFewOpinions { needed: 2 });
    }
    if !p.is_sorted_desc() {
        return Err(OracleError::NotSorted);
    }
    Ok(())
}

/// Unique maximum index, if any.
#[inline]
fn unique_argmax(x: &[u64]) -> Option<usize> {
    let mut best = 0;
    let mut arg = 0;
    let mut n_max = 0;
    for (i, &c) in x.iter().enumerate() {
        if i == 0 || c > best {
            best = c;
            arg = i;
            n_max = 1;
        } else if c == best {
            n_max += 1;
        }
    }
    (n_max == 1).then_some(arg)
}

/// [`event_report`] with a custom winner rule for the `W_i` events.
pub fn event_report_with<W: WinnerRule + ?Sized>(
    h: u64,
    p: &NormalizedConfig,
    rare_x: f64,
    rule: &W,
) -> Result<EventReport, OracleError> {
    check_sorted_pair(p)?;
    if !(rare_x > 0.0 && rare_x < 1.0) {
        return Err(OracleError::InvalidParameter {
            name: "rare_x",
            value: rare_x,
        });
    }
    let k = p.k();
    check_guard(h, k)?;
    let probs = p.probs();
    let threshold = h as f64 * (probs[0] + probs[1]) / 2.0;
    let table = PmfTable::new(h, probs);

    let mut strict_pair = CompensatedSum::new();
    let mut w1_pair = CompensatedSum::new();
    let mut w2_pair = CompensatedSum::new();
    let mut gt_pair = CompensatedSum::new();
    let mut lt_pair = CompensatedSum::new();
    let mut tail_pair = CompensatedSum::new();
    let mut tail = CompensatedSum::new();
    let mut q1 = CompensatedSum::new();
    let mut q2 = CompensatedSum::new();
    let mut winners = Vec::with_capacity(k);

    for_each_outcome(h, k, |x| {
        let mass = table.pmf(x);
        if mass == 0.0 {
            return;
        }
        rule.winners(x, &mut winners);
        let share = mass / winners.len() as f64;
        let w1 = if winners.contains(&0) { share } else { 0.0 };
        let w2 = if winners.contains(&1) { share } else { 0.0 };
        q1.add(w1);
        q2.add(w2);
        let in_tail = (x[0] + x[1]) as f64 >= threshold;
        if in_tail {
            tail.add(mass);
        }
        if matches!(unique_argmax(x), Some(0 | 1)) {
            strict_pair.add(mass);
            w1_pair.add(w1);
            w2_pair.add(w2);
            if x[0] > x[1] {
                gt_pair.add(mass);
            } else if x[1] > x[0] {
                lt_pair.add(mass);
            }
            if in_tail {
                tail_pair.add(mass);
            }
        }
    })?;

    let z = strict_pair.value();
    let cond = |num: f64| (z > 0.0).then(|| num / z);
    let p1 = probs[0];
    Ok(EventReport {
        h,
        p: probs.to_vec(),
        rare_x,
        cond_diff_majority: cond(w1_pair.value() - w2_pair.value()),
        cond_diff_comparison: cond(gt_pair.value() - lt_pair.value()),
        sum_threshold: threshold,
        sum_tail_conditional: cond(tail_pair.value()),
        sum_tail_unconditional: tail.value(),
        strict_pair_12: z,
        rare_set: (1..=k).filter(|&i| probs[i - 1] <= rare_x * p1).collect(),
        strong_set: (1..=k).filter(|&i| probs[i - 1] > p1 / 2.0).collect(),
        unconditional_diff: q1.value() - q2.value(),
    })
}

/// Joint probabilities computed by conditioning on `m = X_1 + X_2`: given
/// `m`, `X_1 ~ Bin(m, p_1/(p_1+p_2))` independently of the remaining
/// opinions, which form a `Multinomial(h - m, p_rest / (1 - p_1 - p_2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumReduction {
    /// `Pr(X_1 > X_2, W12s)`
    pub gt_and_strict_pair: f64,
    /// `Pr(X_2 > X_1, W12s)`
    pub lt_and_strict_pair: f64,
    /// `Pr(W12s)`
    pub strict_pair_12: f64,
    /// `Pr(X_1 + X_2 >= h (p_1 + p_2) / 2, W12s)`
    pub tail_and_strict_pair: f64,
}

/// Independent route to the pair quantities of [`event_report`], via the
/// conditional independence of `(X_1, X_2)` and the rest given their sum.
pub fn sum_reduction(h: u64, p: &NormalizedConfig) -> Result<SumReduction, OracleError> {
    check_sorted_pair(p)?;
    let probs = p.probs();
    let rest_mass: f64 = probs[2..].iter().sum();
    let pair_mass = if rest_mass > 0.0 {
        probs[0] + probs[1]
    } else {
        1.0
    };
    let ratio = probs[0] / (probs[0] + probs[1]);
    let threshold = h as f64 * (probs[0] + probs[1]) / 2.0;
    let rest_probs: Vec<f64> = if rest_mass > 0.0 {
        probs[2..].iter().map(|&x| x / rest_mass).collect()
    } else {
        Vec::new()
    };

    let mut gt = CompensatedSum::new();
    let mut lt = CompensatedSum::new();
    let mut strict = CompensatedSum::new();
    let mut tail = CompensatedSum::new();
    for m in 0..=h {
        let w_m = binomial_pmf(h, m, pair_mass);
        if w_m == 0.0 {
            continue;
        }
        // below[y] = Pr(max of the rest < y | m)
        let below = rest_max_cdf(h - m, &rest_probs, m + 1)?;
        let mut gt_m = CompensatedSum::new();
        let mut lt_m = CompensatedSum::new();
        for y in 0..=m {
            let other = m - y;
            if y == other {
                continue;
            }
            let mass = binomial_pmf(m, y, ratio) * below[y.max(other) as usize];
            if y > other {
                gt_m.add(mass);
            } else {
                lt_m.add(mass);
            }
        }
        let (g, l) = (w_m * gt_m.value(), w_m * lt_m.value());
        gt.add(g);
        lt.add(l);
        strict.add(g + l);
        if m as f64 >= threshold {
            tail.add(g + l);
        }
    }
    Ok(SumReduction {
        gt_and_strict_pair: gt.value(),
        lt_and_strict_pair: lt.value(),
        strict_pair_12: strict.value(),
        tail_and_strict_pair: tail.value(),
    })
}

/// `out[y] = Pr(max_i R_i < y)` for `y < len`, with `R ~ Multinomial(draws, probs)`
/// over the remaining opinions. An empty rest has maximum 0.
fn rest_max_cdf(draws: u64, probs: &[f64], len: u64) -> Result<Vec<f64>, OracleError> {
    let k_rest = probs.len();
    let mut pmf_of_max = vec![0.0; (draws + 1) as usize];
    if k_rest == 0 || draws == 0 {
        pmf_of_max[0] = 1.0;
    } else {
        let table = PmfTable::new(draws, probs);
        let mut acc = vec![CompensatedSum::new(); (draws + 1) as usize];
        for_each_outcome(draws, k_rest, |r| {
            let mass = table.pmf(r);
            if mass > 0.0 {
                let mx = r.iter().copied().max().unwrap_or(0);
                acc[mx as usize].add(mass);
            }
        })?;
        for (slot, s) in pmf_of_max.iter_mut().zip(&acc) {
            *slot = s.value();
        }
    }
    let mut out = vec![0.0; len as usize];
    let mut running = CompensatedSum::new();
    for y in 0..len as usize {
        out[y] = running.value();
        if y < pmf_of_max.len() {
            running.add(pmf_of_max[y]);
        }
    }
    Ok(out)
}

/// `Pr(W12s | X_1 + X_2 >= x)` for `x = 0..=h`; `None` where the
/// conditioning event has probability zero.
pub fn coupling_table(h: u64, p: &NormalizedConfig) -> Result<Vec<Option<f64>>, OracleError> {
    check_sorted_pair(p)?;
    let k = p.k();
    check_guard(h, k)?;
    let table = PmfTable::new(h, p.probs());
    let len = (h + 1) as usize;
    let mut joint = vec![CompensatedSum::new(); len];
    let mut marginal = vec![CompensatedSum::new(); len];
    for_each_outcome(h, k, |x| {
        let mass = table.pmf(x);
        if mass == 0.0 {
            return;
        }
        let s = (x[0] + x[1]) as usize;
        marginal[s].add(mass);
        if matches!(unique_argmax(x), Some(0 | 1)) {
            joint[s].add(mass);
        }
    })?;
    let mut out = vec![None; len];
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for s in (0..len).rev() {
        num.add(joint[s].value());
        den.add(marginal[s].value());
        let d = den.value();
        out[s] = (d > 0.0).then(|| num.value() / d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{win_distribution, EXACT_TOLERANCE};

    fn np(p: &[f64]) -> NormalizedConfig {
        NormalizedConfig::new(p.to_vec(), 0).unwrap()
    }

    #[test]
    fn symmetric_pair_has_zero_differences() {
        let r = event_report(2, &np(&[0.5, 0.5]), 0.5).unwrap();
        assert_eq!(r.cond_diff_majority, Some(0.0));
        assert_eq!(r.cond_diff_comparison, Some(0.0));
        assert_eq!(r.unconditional_diff, 0.0);
    }

    #[test]
    fn rejects_unsorted_and_single_opinion() {
        assert_eq!(
            event_report(3, &np(&[0.4, 0.6]), 0.5),
            Err(OracleError::NotSorted)
        );
        assert_eq!(
            event_report(3, &np(&[1.0]), 0.5),
            Err(OracleError::TooFewOpinions { needed: 2 })
        );
        assert!(matches!(
            event_report(3, &np(&[0.6, 0.4]), 1.5),
            Err(OracleError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn rare_and_strong_sets() {
        let r = event_report(3, &np(&[0.5, 0.3, 0.15, 0.05]), 0.3).unwrap();
        assert_eq!(r.strong_set, vec![1, 2]);
        assert_eq!(r.rare_set, vec![3, 4]);
    }

    #[test]
    fn unconditional_diff_matches_win_distribution() {
        let p = np(&[0.4, 0.3, 0.2, 0.1]);
        let r = event_report(5, &p, 0.5).unwrap();
        let w = win_distribution(5, &p).unwrap();
        assert!((r.unconditional_diff - (w.q[0] - w.q[1])).abs() < EXACT_TOLERANCE);
        assert!((r.strict_pair_12 - w.q_strict_pair_12).abs() < EXACT_TOLERANCE);
    }

    #[test]
    fn sum_reduction_agrees_with_enumeration() {
        for (h, p) in [
            (1u64, vec![0.6, 0.4]),
            (4, vec![0.5, 0.5]),
            (5, vec![0.4, 0.3, 0.2, 0.1]),
            (7, vec![0.35, 0.35, 0.3]),
            (6, vec![0.7, 0.2, 0.1, 0.0]),
        ] {
            let p = np(&p);
            let r = event_report(h, &p, 0.5).unwrap();
            let s = sum_reduction(h, &p).unwrap();
            assert!((s.strict_pair_12 - r.strict_pair_12).abs() < EXACT_TOLERANCE);
            let z = s.strict_pair_12;
            let diff = (s.gt_and_strict_pair - s.lt_and_strict_pair) / z;
            assert!((diff - r.cond_diff_comparison.unwrap()).abs() < EXACT_TOLERANCE);
            let tail = s.tail_and_strict_pair / z;
            assert!((tail - r.sum_tail_conditional.unwrap()).abs() < EXACT_TOLERANCE);
        }
    }

    #[test]
    fn coupling_table_endpoints() {
        let p = np(&[0.4, 0.3, 0.3]);
        let t = coupling_table(4, &p).unwrap();
        let r = event_report(4, &p, 0.5).unwrap();
        // conditioning on X1 + X2 >= 0 is no conditioning at all
        assert!((t[0].unwrap() - r.strict_pair_12).abs() < EXACT_TOLERANCE);
        // X1 + X2 = h means the rest is empty, so a strict pair win unless X1 = X2
        let tie = crate::math::binomial_pmf(4, 2, 0.4 / 0.7);
        assert!((t[4].unwrap() - (1.0 - tie)).abs() < EXACT_TOLERANCE);
    }
}
