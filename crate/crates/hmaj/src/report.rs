//! Aggregation of trial records into per-cell summaries and scaling tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::sweep::TrialRecord;

/// Reads every `*.jsonl` file in `dir` (sorted by file name).
pub fn load_records(dir: &Path) -> anyhow::Result<Vec<TrialRecord>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
            out.push(rec);
        }
    }
    Ok(out)
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "cell_id",
    "n",
    "k",
    "h",
    "B0",
    "trials",
    "plurality_success_rate",
    "median_consensus_round",
    "p90_consensus_round",
    "mean_wall_time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell_id: u64,
    pub n: u64,
    pub k: usize,
    pub h: u64,
    #[serde(rename = "B0")]
    pub b0: u64,
    pub trials: u64,
    pub plurality_success_rate: f64,
    pub median_consensus_round: Option<u64>,
    pub p90_consensus_round: Option<u64>,
    pub mean_wall_time_ms: Option<f64>,
}

fn quantile_u64(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// One row per `(master_seed, cell_id)`, in that order. Consensus-round
/// quantiles use nearest rank over the trials that reached consensus.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u64, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.master_seed, r.cell_id))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let first = rs[0];
            let mut rounds: Vec<u64> = rs.iter().filter_map(|r| r.consensus_round).collect();
            rounds.sort_unstable();
            let times: Vec<f64> = rs.iter().filter_map(|r| r.wall_time_ms).collect();
            let successes = rs.iter().filter(|r| r.plurality_consensus()).count();
            SummaryRow {
                cell_id: first.cell_id,
                n: first.n,
                k: first.k,
                h: first.h,
                b0: first.b0,
                trials: rs.len() as u64,
                plurality_success_rate: successes as f64 / rs.len() as f64,
                median_consensus_round: quantile_u64(&rounds, 0.5),
                p90_consensus_round: quantile_u64(&rounds, 0.9),
                mean_wall_time_ms: (!times.is_empty())
                    .then(|| times.iter().sum::<f64>() / times.len() as f64),
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub k: usize,
    pub n: u64,
    pub ln_n: f64,
    pub trials: u64,
    pub consensus_trials: u64,
    pub median_consensus_round: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub k: usize,
    pub points: usize,
    /// Least-squares slope of the median consensus round against `ln n`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Median consensus round per `(k, n)`.
pub fn scaling_table(records: &[TrialRecord]) -> Vec<ScalingRow> {
    let mut groups: BTreeMap<(usize, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.k, r.n)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((k, n), rs)| {
            let mut rounds: Vec<u64> = rs.iter().filter_map(|r| r.consensus_round).collect();
            rounds.sort_unstable();
            ScalingRow {
                k,
                n,
                ln_n: (n as f64).ln(),
                trials: rs.len() as u64,
                consensus_trials: rounds.len() as u64,
                median_consensus_round: quantile_u64(&rounds, 0.5),
            }
        })
        .collect()
}

pub fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let m = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn scaling_fits(rows: &[ScalingRow]) -> Vec<ScalingFit> {
    let mut by_k: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let pts = by_k.entry(r.k).or_default();
        if let Some(m) = r.median_consensus_round {
            pts.push((r.ln_n, m as f64));
        }
    }
    by_k.into_iter()
        .map(|(k, pts)| {
            let fit = least_squares(&pts);
            ScalingFit {
                k,
                points: pts.len(),
                slope: fit.map(|f| f.0),
                intercept: fit.map(|f| f.1),
            }
        })
        .collect()
}

pub fn write_scaling_csv(path: &Path, rows: &[ScalingRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "k",
            "n",
            "ln_n",
            "trials",
            "consensus_trials",
            "median_consensus_round",
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The line `hmaj simulate` prints for a finished run.
pub fn summary_line(r: &TrialRecord) -> String {
    let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
    let outcome = match (&r.error, r.winner, r.plurality_lost_round) {
        (Some(e), _, _) => format!("error: {e}"),
        (None, Some(w), _) => format!("consensus on {w}"),
        (None, None, Some(_)) => "plurality lost".to_string(),
        (None, None, None) => "round cap".to_string(),
    };
    format!(
        "n={} k={} h={} B0={} seed={} rounds={} consensus_round={} plurality_preserved={} outcome={}",
        r.n,
        r.k,
        r.h,
        r.b0,
        r.seed,
        r.rounds_run(),
        opt(r.consensus_round),
        r.plurality_preserved,
        outcome
    )
}
