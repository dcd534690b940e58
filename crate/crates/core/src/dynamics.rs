//! One synchronous round of h-majority and whole trajectories.
//!
//! A round with seed `s` splits the `n` agents into consecutive blocks of
//! [`AGENT_BLOCK`]; block `b` draws from `RngHandle::new(s, b)`. Results do not
//! depend on how blocks are scheduled, so a parallel driver reproduces the
//! sequential one exactly.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Configuration, OpinionId, Plurality};
use crate::oracle::{win_distribution, OracleError, WinDistribution};
use crate::rng::{derive_seed, RngHandle};
use crate::sampler::{
    mode_of_labels, mode_with_tiebreak, AliasTable, MultinomialLaw, SamplerError, SamplerKind,
};

/// Agents per RNG stream within a round.
pub const AGENT_BLOCK: u64 = 4096;

/// Above this many opinions, round summaries keep only the largest counts.
pub const FULL_COUNTS_MAX_K: usize = 64;
pub const TOP_COUNTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("h must be at least 1")]
    ZeroSampleSize,
    #[error("max_rounds must be at least 1")]
    ZeroMaxRounds,
    #[error("opinion {opinion} is outside 1..={k}")]
    UnknownOpinion { opinion: OpinionId, k: usize },
    #[error("win distribution has {found} opinions, configuration has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop at the first consensus on any opinion.
    Consensus,
    /// Stop at consensus on the given opinion. Consensus elsewhere is
    /// absorbing and also stops the run.
    PluralityConsensusOn(OpinionId),
    /// Always run `max_rounds` rounds.
    MaxRoundsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Every agent draws its own sample.
    AgentLevel,
    /// The next configuration is `Multinomial(n, q)` with `q` from the exact oracle.
    OracleLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunParams {
    pub h: u64,
    pub max_rounds: u64,
    pub stop_rule: StopRule,
    pub seed: u64,
    pub step_mode: StepMode,
    /// End the run as soon as the initial plurality opinion stops being the
    /// unique plurality.
    #[serde(default)]
    pub halt_on_plurality_loss: bool,
}

impl RunParams {
    pub fn new(h: u64, max_rounds: u64, seed: u64) -> Result<Self, DynamicsError> {
        let p = Self {
            h,
            max_rounds,
            stop_rule: StopRule::Consensus,
            seed,
            step_mode: StepMode::AgentLevel,
            halt_on_plurality_loss: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.h == 0 {
            return Err(DynamicsError::ZeroSampleSize);
        }
        if self.max_rounds == 0 {
            return Err(DynamicsError::ZeroMaxRounds);
        }
        Ok(())
    }

    fn check_opinion(&self, k: usize) -> Result<(), DynamicsError> {
        match self.stop_rule {
            StopRule::PluralityConsensusOn(i) if i == 0 || i > k => {
                Err(DynamicsError::UnknownOpinion { opinion: i, k })
            }
            _ => Ok(()),
        }
    }
}

/// Seed of round `round` (the transition from `round - 1` to `round`).
pub fn round_seed(seed: u64, round: u64) -> u64 {
    derive_seed(&[seed, round])
}

/// Number of agent blocks for `n` agents.
pub fn block_count(n: u64) -> u64 {
    n.div_ceil(AGENT_BLOCK)
}

/// Per-round sampling law shared read-only by every agent of the round.
#[derive(Debug, Clone)]
pub struct RoundLaw {
    k: usize,
    n: u64,
    h: u64,
    sampler: RoundSampler,
}

#[derive(Debug, Clone)]
enum RoundSampler {
    /// Consensus on the given 0-based opinion: every sample agrees.
    Point(usize),
    Multinomial(MultinomialLaw),
    Categorical(AliasTable),
}

impl RoundLaw {
    pub fn new(config: &Configuration, h: u64) -> Result<Self, DynamicsError> {
        if h == 0 {
            return Err(DynamicsError::ZeroSampleSize);
        }
        let k = config.k();
        let sampler = if let Some(i) = config.consensus() {
            RoundSampler::Point(i - 1)
        } else {
            let p = config.normalize();
            match SamplerKind::select(k, h) {
                SamplerKind::Multinomial => {
                    RoundSampler::Multinomial(MultinomialLaw::new(p.probs())?)
                }
                SamplerKind::Categorical => RoundSampler::Categorical(AliasTable::new(p.probs())?),
            }
        };
        Ok(Self {
            k,
            n: config.n(),
            h,
            sampler,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Agents in block `block`.
    pub fn block_len(&self, block: u64) -> u64 {
        let start = block * AGENT_BLOCK;
        self.n.saturating_sub(start).min(AGENT_BLOCK)
    }

    /// Updates the agents of block `block`, adding their new opinions to `tally`.
    pub fn run_block(
        &self,
        round_seed: u64,
        block: u64,
        tally: &mut [u64],
    ) -> Result<(), DynamicsError> {
        let agents = self.block_len(block);
        if agents == 0 {
            return Ok(());
        }
        let mut rng = RngHandle::new(round_seed, block);
        match &self.sampler {
            RoundSampler::Point(i) => tally[*i] += agents,
            RoundSampler::Multinomial(law) => {
                let mut x = vec![0u64; self.k];
                for _ in 0..agents {
                    law.draw_into(self.h, &mut rng, &mut x);
                    tally[mode_with_tiebreak(&x, &mut rng)? - 1] += 1;
                }
            }
            RoundSampler::Categorical(table) => {
                let mut labels = vec![0usize; self.h as usize];
                let mut scratch = vec![0u32; self.k];
                for _ in 0..agents {
                    for l in labels.iter_mut() {
                        *l = table.sample_index(&mut rng);
                    }
                    tally[mode_of_labels(&labels, &mut scratch, &mut rng)? - 1] += 1;
                }
            }
        }
        Ok(())
    }

    /// Configuration from a full round tally.
    pub fn finish(&self, tally: Vec<u64>) -> Result<Configuration, DynamicsError> {
        Ok(Configuration::new(tally, self.n)?)
    }
}

/// Next configuration from per-agent samples, all blocks run in order.
pub fn step_partitioned(
    config: &Configuration,
    h: u64,
    round_seed: u64,
) -> Result<Configuration, DynamicsError> {
    let law = RoundLaw::new(config, h)?;
    let mut tally = vec![0u64; law.k()];
    for b in 0..block_count(law.n()) {
        law.run_block(round_seed, b, &mut tally)?;
    }
    law.finish(tally)
}

/// Next configuration from per-agent samples, drawing the round seed from `rng`.
pub fn step<R: rand::RngCore + ?Sized>(
    config: &Configuration,
    h: u64,
    rng: &mut R,
) -> Result<Configuration, DynamicsError> {
    step_partitioned(config, h, rng.next_u64())
}

/// Next configuration as `Multinomial(n, q)` with `q_i = Pr(W_i)`.
pub fn oracle_step<R: rand::Rng + ?Sized>(
    config: &Configuration,
    win: &WinDistribution,
    rng: &mut R,
) -> Result<Configuration, DynamicsError> {
    if win.k() != config.k() {
        return Err(DynamicsError::DimensionMismatch {
            expected: config.k(),
            found: win.k(),
        });
    }
    // Renormalize away rounding drift in the enumerated masses.
    let total: f64 = win.q.iter().sum();
    let q: Vec<f64> = win.q.iter().map(|&x| (x / total).clamp(0.0, 1.0)).collect();
    let mut next = vec![0u64; config.k()];
    MultinomialLaw::new(&q)?.draw_into(config.n(), rng, &mut next);
    Ok(Configuration::new(next, config.n())?)
}

/// Produces the configuration of the next round.
pub trait Stepper {
    fn next(
        &mut self,
        config: &Configuration,
        h: u64,
        round_seed: u64,
    ) -> Result<Configuration, DynamicsError>;
}

/// Sequential agent-level rounds.
#[derive(Debug, Clone, Copy, Default)]
pub struct AgentStepper;

impl Stepper for AgentStepper {
    fn next(
        &mut self,
        config: &Configuration,
        h: u64,
        round_seed: u64,
    ) -> Result<Configuration, DynamicsError> {
        step_partitioned(config, h, round_seed)
    }
}

/// Oracle-level rounds; the exact law is recomputed every round.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleStepper;

impl Stepper for OracleStepper {
    fn next(
        &mut self,
        config: &Configuration,
        h: u64,
        round_seed: u64,
    ) -> Result<Configuration, DynamicsError> {
        if config.consensus().is_some() {
            return Ok(config.clone());
        }
        let win = win_distribution(h, &config.normalize())?;
        oracle_step(config, &win, &mut RngHandle::new(round_seed, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundCounts {
    Full(Vec<u64>),
    /// The [`TOP_COUNTS`] largest `(opinion, count)` pairs, largest first
    /// (ties by opinion id), plus the total of the rest.
    Top {
        top: Vec<(OpinionId, u64)>,
        other: u64,
    },
}

impl RoundCounts {
    pub fn of(config: &Configuration) -> Self {
        let counts = config.counts();
        if counts.len() <= FULL_COUNTS_MAX_K {
            return RoundCounts::Full(counts.to_vec());
        }
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let top: Vec<(OpinionId, u64)> = order[..TOP_COUNTS]
            .iter()
            .map(|&i| (i + 1, counts[i]))
            .collect();
        let kept: u64 = top.iter().map(|&(_, c)| c).sum();
        RoundCounts::Top {
            top,
            other: config.n() - kept,
        }
    }

    /// Largest and second-largest count.
    pub fn top_two(&self) -> (u64, u64) {
        let mut best = (0, 0);
        let mut push = |c: u64| {
            if c > best.0 {
                best = (c, best.0);
            } else if c > best.1 {
                best.1 = c;
            }
        };
        match self {
            RoundCounts::Full(v) => v.iter().for_each(|&c| push(c)),
            RoundCounts::Top { top, .. } => top.iter().for_each(|&(_, c)| push(c)),
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u64,
    pub counts: RoundCounts,
    pub additive_bias: u64,
    pub normalized_bias: f64,
    pub plurality: Plurality,
}

impl RoundSummary {
    pub fn of(round: u64, config: &Configuration) -> Self {
        let stats = config.bias_stats();
        Self {
            round,
            counts: RoundCounts::of(config),
            additive_bias: stats.additive_bias,
            normalized_bias: stats.normalized_bias,
            plurality: stats.plurality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Consensus(OpinionId),
    PluralityLost,
    RoundCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Rounds `0..=last`, round 0 being the initial configuration.
    pub rounds: Vec<RoundSummary>,
    pub terminal_status: TerminalStatus,
    pub consensus_round: Option<u64>,
    /// First round whose unique plurality is not the initial one. Always
    /// `None` when the initial configuration is tied.
    pub plurality_lost_round: Option<u64>,
    pub final_config: Configuration,
}

impl Trajectory {
    pub fn initial_plurality(&self) -> Plurality {
        self.rounds[0].plurality
    }

    pub fn winner(&self) -> Option<OpinionId> {
        match self.terminal_status {
            TerminalStatus::Consensus(i) => Some(i),
            _ => None,
        }
    }
}

pub fn run(config0: &Configuration, params: &RunParams) -> Result<Trajectory, DynamicsError> {
    match params.step_mode {
        StepMode::AgentLevel => run_with(config0, params, &mut AgentStepper),
        StepMode::OracleLevel => run_with(config0, params, &mut OracleStepper),
    }
}

/// [`run`] with a caller-supplied round driver; round `t` uses
/// `round_seed(params.seed, t)`.
pub fn run_with<S: Stepper + ?Sized>(
    config0: &Configuration,
    params: &RunParams,
    stepper: &mut S,
) -> Result<Trajectory, DynamicsError> {
    params.validate()?;
    params.check_opinion(config0.k())?;
    let initial = config0.bias_stats().plurality;
    let mut rounds = vec![RoundSummary::of(0, config0)];
    let mut config = config0.clone();
    let mut consensus_round = config.consensus().map(|_| 0);
    let mut plurality_lost_round = None;

    let stops = |config: &Configuration| match params.stop_rule {
        StopRule::MaxRoundsOnly => false,
        StopRule::Consensus | StopRule::PluralityConsensusOn(_) => config.consensus().is_some(),
    };

    let mut round = 0;
    let mut halted = false;
    while !stops(&config) && round < params.max_rounds {
        round += 1;
        config = stepper.next(&config, params.h, round_seed(params.seed, round))?;
        let summary = RoundSummary::of(round, &config);
        if consensus_round.is_none() && config.consensus().is_some() {
            consensus_round = Some(round);
        }
        if plurality_lost_round.is_none() {
            if let Plurality::Unique(_) = initial {
                if summary.plurality != initial {
                    plurality_lost_round = Some(round);
                    halted = params.halt_on_plurality_loss;
                }
            }
        }
        rounds.push(summary);
        if halted {
            break;
        }
    }

    let terminal_status = match config.consensus() {
        Some(i) => TerminalStatus::Consensus(i),
        None if halted => TerminalStatus::PluralityLost,
        None => TerminalStatus::RoundCap,
    };
    Ok(Trajectory {
        rounds,
        terminal_status,
        consensus_round,
        plurality_lost_round,
        final_config: config,
    })
}
