//! Output files: JSON envelopes and JSONL record streams. Existing files are
//! never overwritten.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::sweep::TrialRecord;
use crate::SCHEMA_VERSION;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCALING_FILE: &str = "scaling.csv";

/// A JSON document with the common header fields.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub master_seed: Option<u64>,
    #[serde(flatten)]
    pub body: &'a T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(master_seed: Option<u64>, body: &'a T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed,
            body,
        }
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn create_new(path: &Path) -> anyhow::Result<File> {
    OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .with_context(|| {
            format!(
                "creating {} (existing files are never overwritten)",
                path.display()
            )
        })
}

pub fn write_json_new<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(create_new(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Fails if `path` exists unless `append` is set.
pub fn records_writer(path: &Path, append: bool) -> anyhow::Result<RecordWriter> {
    let file = if append {
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?
    } else {
        create_new(path)?
    };
    Ok(RecordWriter {
        out: BufWriter::new(file),
        path: path.to_path_buf(),
    })
}

pub struct RecordWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl RecordWriter {
    pub fn write(&mut self, record: &TrialRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
