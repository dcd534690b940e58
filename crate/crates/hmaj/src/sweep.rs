//! Parameter sweeps: a grid of cells, each run for a number of seeded trials,
//! emitting one [`TrialRecord`] per trial.

use std::time::Instant;

use hmaj_core::config::{Configuration, OpinionId};
use hmaj_core::dynamics::{run, RunParams, StepMode, StopRule, TerminalStatus, Trajectory};
use hmaj_core::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::log_rule_h;
use crate::SCHEMA_VERSION;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("schema_version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("`{0}` must list at least one value")]
    EmptyList(&'static str),
    #[error("cell n = {n}, k = {k}: {reason}")]
    BadCell { n: u64, k: usize, reason: String },
}

/// Sample size per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HRule {
    Fixed(u64),
    /// `h = ceil(lambda3 ln(n) / p_1)` with `p_1 = c_0(1) / n`.
    LogRule {
        lambda3: f64,
    },
}

/// Initial configuration per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPattern {
    /// `n / k` each, remainder to the lowest ids.
    Balanced,
    /// Smallest `c_0(1)` with `c_0(1) - max_{j>1} c_0(j) >= lambda1 sqrt(c_0(1))`,
    /// the rest split evenly with the remainder to the lowest ids.
    BalancedPlusBias {
        lambda1: f64,
    },
    Custom {
        counts: Vec<u64>,
    },
}

fn default_stop() -> StopRule {
    StopRule::Consensus
}

fn default_step_mode() -> StepMode {
    StepMode::AgentLevel
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema_version: u32,
    pub master_seed: u64,
    pub n: Vec<u64>,
    pub k: Vec<usize>,
    pub h: HRule,
    pub initial: InitialPattern,
    pub trials: u64,
    pub max_rounds: u64,
    #[serde(default = "default_stop")]
    pub stop: StopRule,
    #[serde(default = "default_step_mode")]
    pub step_mode: StepMode,
    #[serde(default)]
    pub halt_on_plurality_loss: bool,
    /// Off by default so that repeated sweeps are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
    /// When set, every cell must satisfy `c_0(1) >= lambda2 ln n`.
    #[serde(default)]
    pub lambda2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub cell_id: u64,
    pub n: u64,
    pub k: usize,
    pub h: u64,
    pub config: Configuration,
    pub b0: u64,
}

pub fn balanced(n: u64, k: usize) -> Vec<u64> {
    let kk = k as u64;
    (0..kk).map(|i| n / kk + u64::from(i < n % kk)).collect()
}

/// Opinion 1 gets `c1`, the others share `n - c1` as evenly as possible.
fn with_leader(n: u64, k: usize, c1: u64) -> Vec<u64> {
    let mut counts = vec![c1];
    counts.extend(balanced(n - c1, k - 1));
    counts
}

pub fn balanced_plus_bias(n: u64, k: usize, lambda1: f64) -> Option<Vec<u64>> {
    if k == 1 {
        return Some(vec![n]);
    }
    let others = (k - 1) as u64;
    (n.div_ceil(k as u64)..=n)
        .find(|&c1| {
            let max_other = (n - c1).div_ceil(others);
            c1 >= max_other && (c1 - max_other) as f64 >= lambda1 * (c1 as f64).sqrt()
        })
        .map(|c1| with_leader(n, k, c1))
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        self.cells().map(|_| ())
    }

    pub fn cells(&self) -> Result<Vec<Cell>, SpecError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SpecError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.trials == 0 {
            return Err(SpecError::NoTrials);
        }
        if self.max_rounds == 0 {
            return Err(SpecError::NoRounds);
        }
        if self.n.is_empty() {
            return Err(SpecError::EmptyList("n"));
        }
        if self.k.is_empty() {
            return Err(SpecError::EmptyList("k"));
        }
        let mut cells = Vec::new();
        for &n in &self.n {
            for &k in &self.k {
                let bad = |reason: String| SpecError::BadCell { n, k, reason };
                if n == 0 || k == 0 {
                    return Err(bad("n and k must be positive".into()));
                }
                let counts = match &self.initial {
                    InitialPattern::Balanced => balanced(n, k),
                    InitialPattern::BalancedPlusBias { lambda1 } => {
                        let counts = balanced_plus_bias(n, k, *lambda1).ok_or_else(|| {
                            bad(format!("no c_0(1) reaches bias {lambda1} sqrt(c_0(1))"))
                        })?;
                        if k > 1 && counts[0] == n {
                            return Err(bad(
                                "the bias rule leaves no agents for other opinions".into()
                            ));
                        }
                        counts
                    }
                    InitialPattern::Custom { counts } => {
                        if counts.len() != k {
                            return Err(bad(format!(
                                "custom counts have {} opinions",
                                counts.len()
                            )));
                        }
                        counts.clone()
                    }
                };
                let config = Configuration::new(counts, n).map_err(|e| bad(e.to_string()))?;
                let c1 = config.count(1);
                if let Some(l2) = self.lambda2 {
                    if (c1 as f64) < l2 * (n as f64).ln() {
                        return Err(bad(format!("c_0(1) = {c1} is below {l2} ln n")));
                    }
                }
                let h = match self.h {
                    HRule::Fixed(h) => h,
                    HRule::LogRule { .. } if c1 == 0 => {
                        return Err(bad("the log rule needs opinion 1 to have support".into()))
                    }
                    HRule::LogRule { lambda3 } => log_rule_h(lambda3, n, c1 as f64 / n as f64),
                };
                if h == 0 {
                    return Err(bad("derived h is 0".into()));
                }
                let b0 = config.bias_stats().additive_bias;
                cells.push(Cell {
                    cell_id: cells.len() as u64,
                    n,
                    k,
                    h,
                    config,
                    b0,
                });
            }
        }
        Ok(cells)
    }

    pub fn trial_seed(&self, cell_id: u64, trial: u64) -> u64 {
        derive_seed(&[self.master_seed, cell_id, trial])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub round: u64,
    pub delta: f64,
    pub top: u64,
    pub second: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub master_seed: u64,
    pub cell_id: u64,
    pub trial: u64,
    pub seed: u64,
    pub n: u64,
    pub k: usize,
    pub h: u64,
    pub b0: u64,
    pub max_rounds: u64,
    pub initial_plurality: Option<OpinionId>,
    pub consensus_round: Option<u64>,
    pub winner: Option<OpinionId>,
    /// The initial unique plurality was never lost.
    pub plurality_preserved: bool,
    pub plurality_lost_round: Option<u64>,
    pub terminal: Option<TerminalStatus>,
    pub bias_trace: Vec<BiasPoint>,
    pub wall_time_ms: Option<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Consensus on the initial plurality opinion.
    pub fn plurality_consensus(&self) -> bool {
        self.winner.is_some() && self.winner == self.initial_plurality
    }

    pub fn rounds_run(&self) -> u64 {
        self.bias_trace.last().map_or(0, |b| b.round)
    }

    /// Record for a run from `trajectory`.
    pub fn from_trajectory(
        base: RecordBase,
        trajectory: &Trajectory,
        wall_time_ms: Option<f64>,
    ) -> Self {
        let bias_trace = trajectory
            .rounds
            .iter()
            .map(|r| {
                let (top, second) = r.counts.top_two();
                BiasPoint {
                    round: r.round,
                    delta: r.normalized_bias,
                    top,
                    second,
                }
            })
            .collect();
        let initial = trajectory.initial_plurality().opinion();
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: base.master_seed,
            cell_id: base.cell_id,
            trial: base.trial,
            seed: base.seed,
            n: base.n,
            k: base.k,
            h: base.h,
            b0: base.b0,
            max_rounds: base.max_rounds,
            initial_plurality: initial,
            consensus_round: trajectory.consensus_round,
            winner: trajectory.winner(),
            plurality_preserved: initial.is_some() && trajectory.plurality_lost_round.is_none(),
            plurality_lost_round: trajectory.plurality_lost_round,
            terminal: Some(trajectory.terminal_status),
            bias_trace,
            wall_time_ms,
            error: None,
        }
    }

    pub fn failed(base: RecordBase, initial: Option<OpinionId>, error: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: base.master_seed,
            cell_id: base.cell_id,
            trial: base.trial,
            seed: base.seed,
            n: base.n,
            k: base.k,
            h: base.h,
            b0: base.b0,
            max_rounds: base.max_rounds,
            initial_plurality: initial,
            consensus_round: None,
            winner: None,
            plurality_preserved: false,
            plurality_lost_round: None,
            terminal: None,
            bias_trace: Vec::new(),
            wall_time_ms: None,
            error: Some(error),
        }
    }
}

/// Identifying fields shared by every record of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordBase {
    pub master_seed: u64,
    pub cell_id: u64,
    pub trial: u64,
    pub seed: u64,
    pub n: u64,
    pub k: usize,
    pub h: u64,
    pub b0: u64,
    pub max_rounds: u64,
}

/// Record header and run parameters of trial `trial` of `cell`.
pub fn trial_setup(spec: &SweepSpec, cell: &Cell, trial: u64) -> (RecordBase, RunParams) {
    let seed = spec.trial_seed(cell.cell_id, trial);
    let base = RecordBase {
        master_seed: spec.master_seed,
        cell_id: cell.cell_id,
        trial,
        seed,
        n: cell.n,
        k: cell.k,
        h: cell.h,
        b0: cell.b0,
        max_rounds: spec.max_rounds,
    };
    let params = RunParams {
        h: cell.h,
        max_rounds: spec.max_rounds,
        stop_rule: spec.stop,
        seed,
        step_mode: spec.step_mode,
        halt_on_plurality_loss: spec.halt_on_plurality_loss,
    };
    (base, params)
}

pub fn run_trial(spec: &SweepSpec, cell: &Cell, trial: u64) -> TrialRecord {
    let (base, params) = trial_setup(spec, cell, trial);
    let start = Instant::now();
    match run(&cell.config, &params) {
        Ok(traj) => {
            let ms = spec
                .record_timing
                .then(|| start.elapsed().as_secs_f64() * 1e3);
            TrialRecord::from_trajectory(base, &traj, ms)
        }
        Err(e) => TrialRecord::failed(
            base,
            cell.config.bias_stats().plurality.opinion(),
            e.to_string(),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    pub cells: u64,
    pub records: u64,
    pub errors: u64,
}

/// Runs every trial of every cell on a pool of `workers` threads, handing
/// records to `sink` in (cell, trial) order as soon as each chunk finishes.
/// The record stream does not depend on `workers`.
pub fn run_sweep<F>(spec: &SweepSpec, workers: usize, mut sink: F) -> anyhow::Result<SweepStats>
where
    F: FnMut(&TrialRecord) -> std::io::Result<()>,
{
    let cells = spec.cells()?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let chunk = 4 * workers as u64;
    let mut stats = SweepStats {
        cells: cells.len() as u64,
        ..SweepStats::default()
    };
    for cell in &cells {
        let mut start = 0;
        while start < spec.trials {
            let end = (start + chunk).min(spec.trials);
            let records: Vec<TrialRecord> = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|t| run_trial(spec, cell, t))
                    .collect()
            });
            for r in &records {
                stats.records += 1;
                stats.errors += u64::from(r.error.is_some());
                sink(r)?;
            }
            start = end;
        }
    }
    Ok(stats)
}

/// Collects a whole sweep in memory.
pub fn sweep_records(spec: &SweepSpec, workers: usize) -> anyhow::Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    run_sweep(spec, workers, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> SweepSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn balanced_split() {
        assert_eq!(balanced(10, 3), vec![4, 3, 3]);
        assert_eq!(balanced(9, 3), vec![3, 3, 3]);
    }

    #[test]
    fn bias_rule_is_minimal() {
        let n = 10_000;
        let counts = balanced_plus_bias(n, 16, 10.0).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), n);
        let c1 = counts[0];
        let gap = |c: &[u64]| c[0] - c[1..].iter().max().unwrap();
        assert!(gap(&counts) as f64 >= 10.0 * (c1 as f64).sqrt());
        let smaller = with_leader(n, 16, c1 - 1);
        assert!((gap(&smaller) as f64) < 10.0 * ((c1 - 1) as f64).sqrt());
    }

    #[test]
    fn consensus_cell_gives_round_zero() {
        let s = spec(
            r#"{"schema_version":1,"master_seed":3,"n":[10],"k":[2],"h":{"fixed":3},
                "initial":{"custom":{"counts":[10,0]}},"trials":1,"max_rounds":5}"#,
        );
        let recs = sweep_records(&s, 1).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].consensus_round, Some(0));
        assert_eq!(recs[0].winner, Some(1));
    }

    #[test]
    fn zero_trials_rejected() {
        let s = spec(
            r#"{"schema_version":1,"master_seed":3,"n":[10],"k":[2],"h":{"fixed":3},
                "initial":"balanced","trials":0,"max_rounds":5}"#,
        );
        assert_eq!(s.validate(), Err(SpecError::NoTrials));
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: Result<SweepSpec, _> = serde_json::from_str(
            r#"{"schema_version":1,"master_seed":3,"n":[10],"k":[2],"h":{"fixed":3},
                "initial":"balanced","trials":1,"max_rounds":5,"colour":"red"}"#,
        );
        assert!(r.unwrap_err().to_string().contains("colour"));
    }

    #[test]
    fn log_rule_cells() {
        let s = spec(
            r#"{"schema_version":1,"master_seed":3,"n":[1000],"k":[16],"h":{"log_rule":{"lambda3":324.0}},
                "initial":{"balanced_plus_bias":{"lambda1":10.0}},"trials":1,"max_rounds":5}"#,
        );
        let cells = s.cells().unwrap();
        let c = &cells[0];
        let p1 = c.config.count(1) as f64 / 1000.0;
        assert_eq!(c.h, (324.0 * 1000f64.ln() / p1).ceil() as u64);
        assert!(c.b0 as f64 >= 10.0 * (c.config.count(1) as f64).sqrt());
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let s = spec(
            r#"{"schema_version":1,"master_seed":11,"n":[200,300],"k":[3],"h":{"fixed":3},
                "initial":"balanced","trials":9,"max_rounds":500}"#,
        );
        let a = sweep_records(&s, 1).unwrap();
        let b = sweep_records(&s, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 18);
        assert!(a
            .windows(2)
            .all(|w| (w[0].cell_id, w[0].trial) < (w[1].cell_id, w[1].trial)));
    }

    #[test]
    fn trial_errors_are_recorded() {
        // Oracle-level steps beyond the enumeration guard fail per trial.
        let s = spec(
            r#"{"schema_version":1,"master_seed":1,"n":[100],"k":[20],"h":{"fixed":60},
                "initial":"balanced","trials":2,"max_rounds":5,"step_mode":"oracle_level"}"#,
        );
        let recs = sweep_records(&s, 1).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.error.is_some()));
    }
}
