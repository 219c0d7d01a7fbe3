//! Line-delimited JSON run logs.
//!
//! Every line is one object tagged by `"record"`: a `run` header opens each
//! (configuration, repeat) stream and is followed by its `epoch` records.
//! Keys are only ever added, never renamed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub solver: String,
    pub dim: usize,
    pub block_size: usize,
    pub repeat: usize,
    pub alpha0: f64,
    pub reg: f64,
    pub reg_exp: f64,
    pub stddev: f64,
    pub epochs: usize,
    pub eval_every: usize,
    pub threads: usize,
    pub seed: u64,
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub eval_users: usize,
}

/// Timings are wall seconds. `train_seconds` is the sum of the three phase
/// timers and never includes evaluation. Metrics are null on epochs that
/// were not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub solver: String,
    pub dim: usize,
    pub block_size: usize,
    pub repeat: usize,
    pub epoch: usize,
    pub train_seconds: f64,
    pub gramian_seconds: f64,
    pub solve_seconds: f64,
    pub cache_seconds: f64,
    pub eval_seconds: f64,
    pub recall_at_20: Option<f64>,
    pub recall_at_50: Option<f64>,
    pub ndcg_at_100: Option<f64>,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Run(RunHeader),
    Epoch(EpochRecord),
}

/// Writes records one line at a time, flushing after each so a failed run
/// leaves every completed line on disk.
pub struct RecordWriter<W: Write> {
    out: W,
    path: PathBuf,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(BufWriter::new(file), path))
    }
}

impl<W: Write> RecordWriter<W> {
    /// `path` only labels errors.
    pub fn new(out: W, path: impl Into<PathBuf>) -> Self {
        Self { out, path: path.into() }
    }

    pub fn write(&mut self, record: &Record) -> Result<()> {
        let line = serde_json::to_string(record).expect("records always serialize");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|source| Error::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn emit_metrics_log(records: &[Record], path: &Path) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}

/// Parses a log file; blank lines are ignored.
pub fn parse_metrics_log(path: &Path) -> Result<Vec<Record>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
