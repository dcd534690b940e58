//! Exact small-instance probabilities by enumerating every multinomial
//! outcome of one agent's sample.
//!
//! Input shares for the conditional quantities must be sorted in descending
//! order (`p_1 >= p_2 >= ...`); use [`NormalizedConfig::sorted_desc`] and the
//! returned [`Relabeling`](crate::config::Relabeling) to map results back.
//!
//! [`NormalizedConfig::sorted_desc`]: crate::config::NormalizedConfig::sorted_desc

mod enumerate;
mod events;
mod pair;
mod pmf;
mod tiemap;
mod win;

use thiserror::Error;

pub use enumerate::{
    check_guard, enumerate_outcomes, for_each_outcome, outcome_count, Compositions, MAX_OUTCOMES,
};
pub use events::{
    coupling_table, event_report, event_report_with, sum_reduction, EventReport, SumReduction,
};
pub use pair::{
    binomial_pair_report, g_function, lemma9_bound, lemma9_exact_diff, BinomialPairReport,
    ThresholdDiff,
};
pub use pmf::{ln_multinomial_pmf, multinomial_pmf, PmfTable};
pub use tiemap::{tie_map_audit, TieMapAudit, TieMapEntry};
pub use win::{win_distribution, win_distribution_with, SampleMode, WinDistribution, WinnerRule};

/// Absolute tolerance used for every exact equality the oracle reports.
pub const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("outcome space C(h+k-1, k-1) = {outcomes} for h = {h}, k = {k} exceeds the enumeration guard")]
    TooLarge { h: u64, k: usize, outcomes: u128 },
    #[error("outcome sums to {sum}, expected h = {h}")]
    SumMismatch { sum: u64, h: u64 },
    #[error("expected {expected} opinions, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shares must be sorted in descending order")]
    NotSorted,
    #[error("at least {needed} opinions are required")]
    TooFewOpinions { needed: usize },
    #[error("q = {0} must lie strictly between 1/2 and 1")]
    InvalidQ(f64),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}
