//! Audit of the map sending a tied win of opinion 1 to a strict one.
//!
//! A 1-tie is an outcome where `x_1` is a maximum shared with some other
//! opinion. With `S = {i : p_i > p_1 / 2}` and
//! `j = max{i in S : x_i = min_{r in S} x_r}`, the map moves one sample from
//! opinion `j` to opinion 1. It is undefined when `x_j = 0` or `j = 1`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::enumerate::{check_guard, for_each_outcome};
use super::pmf::PmfTable;
use super::{OracleError, EXACT_TOLERANCE};
use crate::config::{NormalizedConfig, OpinionId};
use crate::math::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieMapEntry {
    pub outcome: Vec<u64>,
    pub image: Vec<u64>,
    pub j: OpinionId,
    /// `Pr(f(x)) / Pr(x)` from the multinomial pmf.
    pub ratio_pmf: f64,
    /// `x_j / (x_1 + 1) * p_1 / p_j`
    pub ratio_formula: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieMapAudit {
    pub h: u64,
    pub p: Vec<f64>,
    pub strong_set: Vec<OpinionId>,
    /// Positive-mass 1-ties.
    pub tie_outcomes: u64,
    pub entries: Vec<TieMapEntry>,
    /// 1-ties on which the map is undefined.
    pub undefined: u64,
    /// `Pr(T_1)`
    pub tie_mass: f64,
    /// Mass of the 1-ties where the map is undefined.
    pub undefined_mass: f64,
    /// `sum Pr(f(x))` over the mapped 1-ties.
    pub image_mass: f64,
    pub injective: bool,
    /// Largest relative gap between `ratio_pmf` and `ratio_formula`.
    pub max_ratio_error: f64,
    pub ratio_check_passed: bool,
    pub images_strict_for_1: bool,
    pub pr_strict_1: f64,
    pub pr_ties_1: f64,
    /// `None` when `pr_ties_1 = 0`.
    pub strict_over_ties: Option<f64>,
    pub passed: bool,
}

pub fn tie_map_audit(h: u64, p: &NormalizedConfig) -> Result<TieMapAudit, OracleError> {
    if !p.is_sorted_desc() {
        return Err(OracleError::NotSorted);
    }
    let k = p.k();
    check_guard(h, k)?;
    let probs = p.probs();
    let p1 = probs[0];
    let strong: Vec<usize> = (0..k).filter(|&i| probs[i] > p1 / 2.0).collect();
    let table = PmfTable::new(h, probs);

    let mut entries = Vec::new();
    let mut images = BTreeSet::new();
    let mut injective = true;
    let mut images_strict = true;
    let mut tie_outcomes = 0u64;
    let mut undefined = 0u64;
    let mut max_err = 0.0f64;
    let mut tie_mass = CompensatedSum::new();
    let mut undefined_mass = CompensatedSum::new();
    let mut image_mass = CompensatedSum::new();
    let mut strict = CompensatedSum::new();
    let mut ties = CompensatedSum::new();
    let mut image = Vec::with_capacity(k);

    for_each_outcome(h, k, |x| {
        let ln_mass = table.ln_pmf(x);
        if ln_mass == f64::NEG_INFINITY {
            return;
        }
        let mass = libm::exp(ln_mass);
        let x1 = x[0];
        if x.iter().any(|&c| c > x1) {
            return;
        }
        ties.add(mass);
        if !x[1..].contains(&x1) {
            strict.add(mass);
            return;
        }
        tie_outcomes += 1;
        tie_mass.add(mass);

        let low = strong.iter().map(|&i| x[i]).min().unwrap_or(0);
        let j = strong
            .iter()
            .copied()
            .filter(|&i| x[i] == low)
            .max()
            .unwrap_or(0);
        if j == 0 || x[j] == 0 {
            undefined += 1;
            undefined_mass.add(mass);
            return;
        }
        image.clear();
        image.extend_from_slice(x);
        image[0] += 1;
        image[j] -= 1;
        let ln_image = table.ln_pmf(&image);
        image_mass.add(libm::exp(ln_image));
        let ratio_pmf = libm::exp(ln_image - ln_mass);
        let ratio_formula = x[j] as f64 / (x1 + 1) as f64 * p1 / probs[j];
        max_err = max_err.max((ratio_pmf - ratio_formula).abs() / ratio_formula);
        if image[1..].iter().any(|&c| c >= image[0]) {
            images_strict = false;
        }
        if !images.insert(image.clone()) {
            injective = false;
        }
        entries.push(TieMapEntry {
            outcome: x.to_vec(),
            image: image.clone(),
            j: j + 1,
            ratio_pmf,
            ratio_formula,
        });
    })?;

    let pr_strict_1 = strict.value();
    let pr_ties_1 = ties.value();
    let ratio_check_passed = max_err <= EXACT_TOLERANCE;
    Ok(TieMapAudit {
        h,
        p: probs.to_vec(),
        strong_set: strong.iter().map(|&i| i + 1).collect(),
        tie_outcomes,
        entries,
        undefined,
        tie_mass: tie_mass.value(),
        undefined_mass: undefined_mass.value(),
        image_mass: image_mass.value(),
        injective,
        max_ratio_error: max_err,
        ratio_check_passed,
        images_strict_for_1: images_strict,
        pr_strict_1,
        pr_ties_1,
        strict_over_ties: (pr_ties_1 > 0.0).then(|| pr_strict_1 / pr_ties_1),
        passed: injective && ratio_check_passed && images_strict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::win_distribution;
    use alloc::vec;
    use proptest::prelude::*;

    fn np(p: &[f64]) -> NormalizedConfig {
        NormalizedConfig::new(p.to_vec(), 0).unwrap()
    }

    #[test]
    fn single_opinion_has_no_ties() {
        let a = tie_map_audit(5, &np(&[1.0])).unwrap();
        assert_eq!(a.tie_outcomes, 0);
        assert!(a.entries.is_empty());
        assert!(a.passed);
        assert_eq!(a.strict_over_ties, Some(1.0));
    }

    #[test]
    fn uniform_three_opinions_two_draws() {
        // T_1 = {(1,1,0), (1,0,1)}; the least-scoring strong opinion has
        // zero samples in both, so the map is undefined on each.
        let third = 1.0 / 3.0;
        let a = tie_map_audit(2, &np(&[third, third, third])).unwrap();
        assert_eq!(a.tie_outcomes, 2);
        assert_eq!(a.undefined, 2);
        assert!(a.entries.is_empty());
        assert!((a.tie_mass - 4.0 / 9.0).abs() < 1e-14);
        assert!((a.pr_strict_1 - 1.0 / 9.0).abs() < 1e-14);
        assert!((a.pr_ties_1 - 5.0 / 9.0).abs() < 1e-14);
        assert!(a.passed);
    }

    #[test]
    fn uniform_three_opinions_five_draws() {
        // T_1 = {(2,2,1), (2,1,2)}, with images (3,2,0) and (3,0,2).
        let third = 1.0 / 3.0;
        let a = tie_map_audit(5, &np(&[third, third, third])).unwrap();
        assert_eq!(a.tie_outcomes, 2);
        assert_eq!(a.undefined, 0);
        let pairs: Vec<(Vec<u64>, Vec<u64>)> = a
            .entries
            .iter()
            .map(|e| (e.outcome.clone(), e.image.clone()))
            .collect();
        assert!(pairs.contains(&(vec![2, 2, 1], vec![3, 2, 0])));
        assert!(pairs.contains(&(vec![2, 1, 2], vec![3, 0, 2])));
        for e in &a.entries {
            // x_j = 1, x_1 = 2, equal shares
            assert!((e.ratio_formula - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(a.injective);
        assert!(a.passed);
    }

    #[test]
    fn weak_opinions_are_never_decremented() {
        let a = tie_map_audit(6, &np(&[0.5, 0.35, 0.15])).unwrap();
        assert_eq!(a.strong_set, vec![1, 2]);
        assert!(a.entries.iter().all(|e| e.j == 2));
        assert!(a.passed);
    }

    #[test]
    fn unsorted_is_rejected() {
        assert_eq!(
            tie_map_audit(3, &np(&[0.2, 0.8])),
            Err(OracleError::NotSorted)
        );
    }

    #[test]
    fn strict_and_tie_masses_match_win_distribution() {
        let p = np(&[0.4, 0.3, 0.2, 0.1]);
        let a = tie_map_audit(9, &p).unwrap();
        let w = win_distribution(9, &p).unwrap();
        assert!((a.pr_strict_1 - w.q_strict[0]).abs() < 1e-13);
        assert!((a.pr_ties_1 - w.q_ties[0]).abs() < 1e-13);
        assert!((a.pr_ties_1 - a.pr_strict_1 - a.tie_mass).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn audit_passes_on_small_instances(h in 1u64..12, w in prop::collection::vec(0.01f64..1.0, 2..5)) {
            let mut w = w;
            w.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let p = NormalizedConfig::from_weights(&w, 0).unwrap();
            let a = tie_map_audit(h, &p).unwrap();
            prop_assert!(a.injective);
            prop_assert!(a.ratio_check_passed, "max error {}", a.max_ratio_error);
            prop_assert!(a.images_strict_for_1);
            prop_assert_eq!(a.entries.len() as u64 + a.undefined, a.tie_outcomes);
        }
    }
}
