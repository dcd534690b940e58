//! Command-line front end. Exit codes: 0 success, 1 runtime error or failed
//! check, 2 configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hmaj_core::config::NormalizedConfig;
use hmaj_core::dynamics::{run_with, OracleStepper, StepMode, Stepper, StopRule};
use hmaj_core::oracle::{event_report, tie_map_audit, win_distribution};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::files::{
    ensure_dir, records_writer, write_json_new, Envelope, RECORDS_FILE, SCALING_FILE, SUMMARY_FILE,
    TRAJECTORY_FILE,
};
use crate::montecarlo::ParallelStepper;
use crate::report::{
    load_records, scaling_fits, scaling_table, summarize, summary_line, write_scaling_csv,
    write_summary_csv,
};
use crate::sweep::{run_sweep, trial_setup, HRule, InitialPattern, SweepSpec, TrialRecord};
use crate::verify::{run_suites, VerifyOptions};
use crate::SCHEMA_VERSION;

/// Per-run summary lines written by `report`.
pub const RUNS_FILE: &str = "runs.txt";

#[derive(Debug, Parser)]
#[command(
    name = "hmaj",
    version,
    about = "Synchronous h-majority dynamics: simulation, exact oracle, verification"
)]
pub struct Cli {
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter sweep, writing one JSON line per trial.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Append to an existing record file instead of failing.
        #[arg(long)]
        append: bool,
    },
    /// Exact single-agent probabilities by enumeration.
    Oracle {
        #[arg(long)]
        h: u64,
        /// Comma-separated shares; normalized to sum to 1.
        #[arg(long)]
        p: String,
        #[arg(long, value_enum, default_value_t = OracleReport::Win)]
        report: OracleReport,
        /// Share ratio below which an opinion counts as rare.
        #[arg(long, default_value_t = 0.25)]
        rare_x: f64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites.
    Verify {
        /// Suite name; repeat for several. Default: all standard suites.
        #[arg(long)]
        suite: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo trials per instance.
        #[arg(long)]
        trials: Option<u64>,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate record files into CSV summaries.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleReport {
    Win,
    Event,
    Tiemap,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn default_stop() -> StopRule {
    StopRule::Consensus
}

fn default_step_mode() -> StepMode {
    StepMode::AgentLevel
}

/// Input of `hmaj simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub counts: Vec<u64>,
    pub h: HRule,
    pub max_rounds: u64,
    #[serde(default = "default_stop")]
    pub stop: StopRule,
    #[serde(default = "default_step_mode")]
    pub step_mode: StepMode,
    #[serde(default)]
    pub halt_on_plurality_loss: bool,
    #[serde(default)]
    pub record_timing: bool,
}

impl SimulateConfig {
    /// The equivalent single-cell, single-trial sweep.
    pub fn as_sweep(&self) -> SweepSpec {
        SweepSpec {
            schema_version: self.schema_version,
            master_seed: self.master_seed,
            n: vec![self.counts.iter().sum()],
            k: vec![self.counts.len()],
            h: self.h,
            initial: InitialPattern::Custom {
                counts: self.counts.clone(),
            },
            trials: 1,
            max_rounds: self.max_rounds,
            stop: self.stop,
            step_mode: self.step_mode,
            halt_on_plurality_loss: self.halt_on_plurality_loss,
            record_timing: self.record_timing,
            lambda2: None,
        }
    }
}

/// Parses a JSON file; the error names the offending field.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CliError::Config(format!(
            "{}: field `{field}`: {}",
            path.display(),
            e.inner()
        ))
    })
}

/// Parses arguments and runs the command, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Simulate { config, seed, out } => simulate(config, *seed, out),
        Command::Sweep {
            spec,
            workers,
            out,
            append,
        } => sweep(spec, *workers, out, *append, cli.verbose),
        Command::Oracle {
            h,
            p,
            report,
            rare_x,
            out,
        } => oracle(*h, p, *report, *rare_x, out.as_deref()),
        Command::Verify {
            suite,
            seed,
            trials,
            out,
        } => verify(suite, *seed, *trials, out.as_deref()),
        Command::Report { input, out } => report(input, out),
    }
}

#[derive(Serialize)]
struct TrajectoryFile<'a> {
    counts: &'a [u64],
    h: u64,
    seed: u64,
    trajectory: &'a hmaj_core::dynamics::Trajectory,
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<i32, CliError> {
    let mut cfg: SimulateConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let spec = cfg.as_sweep();
    let cells = spec.cells().map_err(|e| CliError::Config(e.to_string()))?;
    let cell = &cells[0];
    let (base, params) = trial_setup(&spec, cell, 0);
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    ensure_dir(out)?;
    let mut records = records_writer(&out.join(RECORDS_FILE), false)?;
    let start = std::time::Instant::now();
    let mut stepper: Box<dyn Stepper> = match params.step_mode {
        StepMode::AgentLevel => Box::new(ParallelStepper),
        StepMode::OracleLevel => Box::new(OracleStepper),
    };
    let result = run_with(&cell.config, &params, stepper.as_mut());
    let ms = cfg
        .record_timing
        .then(|| start.elapsed().as_secs_f64() * 1e3);
    let (record, code) = match &result {
        Ok(traj) => {
            write_json_new(
                &out.join(TRAJECTORY_FILE),
                &Envelope::new(
                    Some(cfg.master_seed),
                    &TrajectoryFile {
                        counts: &cfg.counts,
                        h: cell.h,
                        seed: base.seed,
                        trajectory: traj,
                    },
                ),
            )?;
            (TrialRecord::from_trajectory(base, traj, ms), 0)
        }
        Err(e) => (
            TrialRecord::failed(
                base,
                cell.config.bias_stats().plurality.opinion(),
                e.to_string(),
            ),
            1,
        ),
    };
    records.write(&record)?;
    records.flush()?;
    println!("{}", summary_line(&record));
    Ok(code)
}

fn sweep(
    spec_path: &Path,
    workers: Option<usize>,
    out: &Path,
    append: bool,
    verbose: bool,
) -> Result<i32, CliError> {
    let spec: SweepSpec = read_config(spec_path)?;
    let cells = spec.cells().map_err(|e| CliError::Config(e.to_string()))?;
    if verbose {
        for c in &cells {
            eprintln!(
                "cell {}: n={} k={} h={} B0={}",
                c.cell_id, c.n, c.k, c.h, c.b0
            );
        }
    }
    let workers =
        workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    ensure_dir(out)?;
    let mut writer = records_writer(&out.join(RECORDS_FILE), append)?;
    let mut last_cell = None;
    let stats = run_sweep(&spec, workers, |r| {
        if verbose && last_cell != Some(r.cell_id) {
            eprintln!("running cell {}", r.cell_id);
            last_cell = Some(r.cell_id);
        }
        writer.write(r)?;
        // Flush per record so an interrupted sweep keeps every finished trial.
        writer.flush()
    })?;
    println!(
        "{} records from {} cells written to {} ({} trial errors)",
        stats.records,
        stats.cells,
        writer.path().display(),
        stats.errors
    );
    Ok(0)
}

fn parse_shares(p: &str) -> Result<NormalizedConfig, CliError> {
    let weights = p
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("--p: {e}")))?;
    NormalizedConfig::from_weights(&weights, 0).map_err(|e| CliError::Config(format!("--p: {e}")))
}

fn oracle(
    h: u64,
    p: &str,
    report: OracleReport,
    rare_x: f64,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let shares = parse_shares(p)?;
    if report != OracleReport::Win && !shares.is_sorted_desc() {
        return Err(CliError::Config(
            "--p: event and tiemap reports need shares in descending order".into(),
        ));
    }
    let oracle_err = |e: hmaj_core::oracle::OracleError| CliError::Runtime(e.into());
    let value = match report {
        OracleReport::Win => {
            serde_json::to_value(win_distribution(h, &shares).map_err(oracle_err)?)
        }
        OracleReport::Event => {
            serde_json::to_value(event_report(h, &shares, rare_x).map_err(oracle_err)?)
        }
        OracleReport::Tiemap => {
            serde_json::to_value(tie_map_audit(h, &shares).map_err(oracle_err)?)
        }
    }
    .map_err(|e| CliError::Runtime(e.into()))?;
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "master_seed": null,
        "p": shares.probs(),
        "report": value,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.into()))?
    );
    if let Some(path) = out {
        write_json_new(path, &doc)?;
    }
    Ok(0)
}

fn verify(
    suites: &[String],
    seed: Option<u64>,
    trials: Option<u64>,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let mut opts = VerifyOptions::default();
    if let Some(s) = seed {
        opts.seed = s;
    }
    if let Some(t) = trials {
        opts.mc_trials = t;
    }
    let report = run_suites(suites, &opts).map_err(|e| match e {
        crate::verify::VerifyError::UnknownSuite(_) => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.into()),
    })?;
    let mut stdout = std::io::stdout().lock();
    for s in &report.suites {
        let status = if s.ok() { "PASS" } else { "FAIL" };
        writeln!(
            stdout,
            "{status} {}: {} checks, {} failed, {} inconclusive",
            s.suite, s.checks, s.failed, s.inconclusive
        )?;
        for (name, v) in &s.constants {
            writeln!(stdout, "    {name} = {v}")?;
        }
        for f in &s.failures {
            writeln!(stdout, "    fail {}: {}", f.check, f.detail)?;
        }
        for v in &s.inconclusive_cases {
            writeln!(
                stdout,
                "    inconclusive {}: bound {}",
                v.bound.name(),
                v.bound_value
            )?;
        }
    }
    if let Some(path) = out {
        write_json_new(path, &Envelope::new(Some(opts.seed), &report))?;
    }
    Ok(report.exit_code())
}

fn report(input: &Path, out: &Path) -> Result<i32, CliError> {
    if !input.is_dir() {
        return Err(CliError::Config(format!(
            "{}: no such directory",
            input.display()
        )));
    }
    let records = load_records(input)?;
    ensure_dir(out)?;
    let rows = summarize(&records);
    write_summary_csv(&out.join(SUMMARY_FILE), &rows)?;
    let scaling = scaling_table(&records);
    write_scaling_csv(&out.join(SCALING_FILE), &scaling)?;
    let mut runs = String::new();
    for r in &records {
        runs.push_str(&summary_line(r));
        runs.push('\n');
    }
    fs::write(out.join(RUNS_FILE), runs)?;
    println!("{} records, {} cells", records.len(), rows.len());
    for f in scaling_fits(&scaling) {
        match f.slope {
            Some(s) => println!(
                "k={}: median consensus round vs ln n slope {s:.4} over {} points",
                f.k, f.points
            ),
            None => println!("k={}: not enough points for a slope ({})", f.k, f.points),
        }
    }
    Ok(0)
}
