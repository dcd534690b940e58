//! Audits over recorded trajectories and single-round agent samples.

use hmaj_core::config::{Configuration, OpinionId};
use hmaj_core::sampler::{draw_binomial, SamplerError};
use hmaj_core::theory::{regime_of, Bound, Regime};
use hmaj_core::RngHandle;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sweep::{BiasPoint, TrialRecord};

/// Which rounds count as "small bias" for [`bias_growth_audit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Small-bias regime for the top two opinions of that round, with
    /// `delta >= lambda1 sqrt(p_1 / n)`.
    PerRound { lambda1: f64, c6: f64 },
    /// `floor <= delta < boundary`.
    Fixed { boundary: f64, floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthAudit {
    pub rule: ThresholdRule,
    pub qualifying_pairs: u64,
    /// Pairs with `delta_{t+1} >= e * delta_t`.
    pub amplified_pairs: u64,
    pub fraction_amplified: Option<f64>,
    pub factor_min: Option<f64>,
    pub factor_median: Option<f64>,
    pub factor_p10: Option<f64>,
    pub factor_max: Option<f64>,
}

fn qualifies(point: &BiasPoint, n: u64, h: u64, rule: ThresholdRule) -> bool {
    if point.delta <= 0.0 {
        return false;
    }
    match rule {
        ThresholdRule::Fixed { boundary, floor } => floor <= point.delta && point.delta < boundary,
        ThresholdRule::PerRound { lambda1, c6 } => {
            let (p1, p2) = (point.top as f64 / n as f64, point.second as f64 / n as f64);
            regime_of(point.delta, p1, p2, h, c6) == Regime::SmallBias
                && point.delta >= lambda1 * (p1 / n as f64).sqrt()
        }
    }
}

/// Nearest-rank quantile of sorted data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// Growth factors `delta_{t+1} / delta_t` over consecutive rounds whose
/// starting round qualifies under `rule`.
pub fn growth_factors<'a, I>(records: I, rule: ThresholdRule) -> Vec<f64>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut factors = Vec::new();
    for r in records {
        for w in r.bias_trace.windows(2) {
            if w[1].round == w[0].round + 1 && qualifies(&w[0], r.n, r.h, rule) {
                factors.push(w[1].delta / w[0].delta);
            }
        }
    }
    factors
}

pub fn bias_growth_audit<'a, I>(records: I, rule: ThresholdRule) -> GrowthAudit
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut factors = growth_factors(records, rule);
    factors.sort_by(f64::total_cmp);
    let amplified = factors
        .iter()
        .filter(|&&f| f >= std::f64::consts::E)
        .count() as u64;
    let total = factors.len() as u64;
    GrowthAudit {
        rule,
        qualifying_pairs: total,
        amplified_pairs: amplified,
        fraction_amplified: (total > 0).then(|| amplified as f64 / total as f64),
        factor_min: factors.first().copied(),
        factor_median: nearest_rank(&factors, 0.5),
        factor_p10: nearest_rank(&factors, 0.1),
        factor_max: factors.last().copied(),
    }
}

#[derive(Debug, Error)]
pub enum RareAuditError {
    #[error("opinion {0} is out of range")]
    UnknownOpinion(OpinionId),
    #[error("the rare opinion must differ from opinion 1 and have positive support")]
    NotRare,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareAudit {
    pub n: u64,
    pub h: u64,
    pub rare: OpinionId,
    pub p1: f64,
    pub p_rare: f64,
    pub rounds: u64,
    /// Rounds in which every agent saw opinion 1 strictly more often than the rare one.
    pub clean_rounds: u64,
    pub fraction_clean: f64,
    /// `1 - n^{-(C_3 - 2)}`.
    pub target: f64,
}

/// Simulates `rounds` independent rounds from `config` and counts those in
/// which no agent's sample has `X_rare >= X_1`. Only the pair `(X_1, X_rare)`
/// of each sample is drawn: `X_1 ~ Bin(h, p_1)`, then
/// `X_rare ~ Bin(h - X_1, p_rare / (1 - p_1))`. Round `r` uses stream `r`.
pub fn rare_elimination_audit(
    config: &Configuration,
    h: u64,
    rare: OpinionId,
    rounds: u64,
    seed: u64,
    c3: f64,
) -> Result<RareAudit, RareAuditError> {
    if rare == 0 || rare > config.k() {
        return Err(RareAuditError::UnknownOpinion(rare));
    }
    let n = config.n();
    let p1 = config.count(1) as f64 / n as f64;
    let p_rare = config.count(rare) as f64 / n as f64;
    if rare == 1 || p_rare == 0.0 {
        return Err(RareAuditError::NotRare);
    }
    let cond = (p_rare / (1.0 - p1)).min(1.0);
    let clean: Vec<bool> = (0..rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = RngHandle::new(seed, round);
            for _ in 0..n {
                let x1 = draw_binomial(h, p1, &mut rng)?;
                let xr = draw_binomial(h - x1, cond, &mut rng)?;
                if xr >= x1 {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect::<Result<_, SamplerError>>()?;
    let clean_rounds = clean.iter().filter(|&&c| c).count() as u64;
    Ok(RareAudit {
        n,
        h,
        rare,
        p1,
        p_rare,
        rounds,
        clean_rounds,
        fraction_clean: clean_rounds as f64 / rounds.max(1) as f64,
        target: Bound::WeakOpinion { c2: 0.5, c3, n }.value(),
    })
}
