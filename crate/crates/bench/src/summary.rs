//! Per-configuration summary of one or more run logs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::records::{parse_metrics_log, EpochRecord, Record};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub dim: usize,
    pub block_size: usize,
    pub runs: usize,
    pub epochs: usize,
    /// Median of `train_seconds` over every epoch of every run.
    pub median_epoch_seconds: f64,
    /// Last evaluated epoch of each run, averaged over runs.
    pub recall_at_20: Option<f64>,
    pub recall_at_50: Option<f64>,
    pub ndcg_at_100: Option<f64>,
}

type Key = (String, usize, usize);

#[derive(Default)]
struct Group {
    times: Vec<f64>,
    runs: usize,
    epochs: usize,
    finals: Vec<[Option<f64>; 3]>,
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Option<Vec<f64>> = xs.collect();
    let vals = vals?;
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn metrics(e: &EpochRecord) -> [Option<f64>; 3] {
    [e.recall_at_20, e.recall_at_50, e.ndcg_at_100]
}

fn close_run(groups: &mut BTreeMap<Key, Group>, run: Option<&(Key, usize)>, finals: Option<[Option<f64>; 3]>) {
    if let (Some((key, _)), Some(f)) = (run, finals) {
        groups.get_mut(key).expect("group opened with its header").finals.push(f);
    }
}

/// Groups epoch records by (solver, dim, block_size) across all files. Each
/// epoch record must belong to the run header immediately preceding it.
pub fn summarize_sweep(paths: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    if paths.is_empty() {
        return Err(Error::Config("no log files given".into()));
    }
    let mut groups: BTreeMap<Key, Group> = BTreeMap::new();
    for path in paths {
        let records = parse_metrics_log(path)?;
        let mut current: Option<(Key, usize)> = None;
        let mut last_epoch = 0;
        let mut final_metrics: Option<[Option<f64>; 3]> = None;
        for (n, record) in records.iter().enumerate() {
            let line = n + 1;
            match record {
                Record::Run(h) => {
                    close_run(&mut groups, current.as_ref(), final_metrics.take());
                    let key = (h.solver.clone(), h.dim, h.block_size);
                    let g = groups.entry(key.clone()).or_default();
                    g.runs += 1;
                    current = Some((key, h.repeat));
                    last_epoch = 0;
                }
                Record::Epoch(e) => {
                    let Some((key, repeat)) = &current else {
                        return Err(schema(path, line, "epoch record before any run header"));
                    };
                    if (&e.solver, e.dim, e.block_size, e.repeat) != (&key.0, key.1, key.2, *repeat) {
                        return Err(schema(path, line, "epoch record does not match its run header"));
                    }
                    if e.epoch <= last_epoch {
                        return Err(schema(path, line, format!("epoch {} after epoch {last_epoch}", e.epoch)));
                    }
                    if !(e.train_seconds >= 0.0) {
                        return Err(schema(path, line, "negative train_seconds"));
                    }
                    last_epoch = e.epoch;
                    let g = groups.get_mut(key).expect("group opened with its header");
                    g.times.push(e.train_seconds);
                    g.epochs = g.epochs.max(e.epoch);
                    if e.ndcg_at_100.is_some() || e.recall_at_20.is_some() {
                        final_metrics = Some(metrics(e));
                    }
                }
            }
        }
        close_run(&mut groups, current.as_ref(), final_metrics.take());
    }

    Ok(groups
        .into_iter()
        .map(|((solver, dim, block_size), mut g)| SummaryRow {
            solver,
            dim,
            block_size,
            runs: g.runs,
            epochs: g.epochs,
            median_epoch_seconds: if g.times.is_empty() { f64::NAN } else { median(&mut g.times) },
            recall_at_20: mean(g.finals.iter().map(|f| f[0])),
            recall_at_50: mean(g.finals.iter().map(|f| f[1])),
            ndcg_at_100: mean(g.finals.iter().map(|f| f[2])),
        })
        .collect())
}

/// Tab-separated table with a header row; missing values are empty.
pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "solver\tdim\tblock_size\truns\tepochs\tmedian_epoch_seconds\trecall_at_20\trecall_at_50\tndcg_at_100"
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}",
            r.solver,
            r.dim,
            r.block_size,
            r.runs,
            r.epochs,
            r.median_epoch_seconds,
            opt(r.recall_at_20),
            opt(r.recall_at_50),
            opt(r.ndcg_at_100)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{emit_metrics_log, RunHeader};

    fn header(block_size: usize, repeat: usize) -> Record {
        Record::Run(RunHeader {
            solver: "ialspp".into(),
            dim: 8,
            block_size,
            repeat,
            alpha0: 0.1,
            reg: 0.003,
            reg_exp: 1.0,
            stddev: 0.1,
            epochs: 1,
            eval_every: 1,
            threads: 1,
            seed: repeat as u64,
            num_users: 10,
            num_items: 10,
            num_interactions: 30,
            eval_users: 1,
        })
    }

    fn epoch(block_size: usize, repeat: usize, epoch: usize, secs: f64, ndcg: Option<f64>) -> Record {
        Record::Epoch(EpochRecord {
            solver: "ialspp".into(),
            dim: 8,
            block_size,
            repeat,
            epoch,
            train_seconds: secs,
            gramian_seconds: 0.0,
            solve_seconds: secs,
            cache_seconds: 0.0,
            eval_seconds: 0.0,
            recall_at_20: ndcg,
            recall_at_50: ndcg,
            ndcg_at_100: ndcg,
            loss: None,
        })
    }

    fn write(dir: &Path, name: &str, records: &[Record]) -> PathBuf {
        let path = dir.join(name);
        emit_metrics_log(records, &path).unwrap();
        path
    }

    #[test]
    fn single_run_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.jsonl", &[header(4, 0), epoch(4, 0, 1, 2.0, Some(0.3))]);
        let rows = summarize_sweep(&[p]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].runs, rows[0].epochs, rows[0].median_epoch_seconds), (1, 1, 2.0));
        assert_eq!(rows[0].ndcg_at_100, Some(0.3));
    }

    #[test]
    fn repeats_take_the_median_and_average_final_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.jsonl", &[header(4, 0), epoch(4, 0, 1, 1.0, Some(0.2))]);
        let b = write(dir.path(), "b.jsonl", &[header(4, 1), epoch(4, 1, 1, 3.0, Some(0.4))]);
        let rows = summarize_sweep(&[a, b]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].runs, 2);
        assert_eq!(rows[0].median_epoch_seconds, 2.0);
        assert!((rows[0].ndcg_at_100.unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn final_metrics_come_from_last_evaluated_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            &[header(4, 0), epoch(4, 0, 1, 1.0, Some(0.1)), epoch(4, 0, 2, 1.0, Some(0.2)), epoch(4, 0, 3, 5.0, None)],
        );
        let rows = summarize_sweep(&[p]).unwrap();
        assert_eq!(rows[0].ndcg_at_100, Some(0.2));
        assert_eq!(rows[0].median_epoch_seconds, 1.0);
    }

    #[test]
    fn one_row_per_configuration() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = Vec::new();
        for b in [1, 4, 8] {
            records.push(header(b, 0));
            records.push(epoch(b, 0, 1, b as f64, Some(0.1)));
        }
        let p = write(dir.path(), "sweep.jsonl", &records);
        let rows = summarize_sweep(&[p]).unwrap();
        assert_eq!(rows.iter().map(|r| r.block_size).collect::<Vec<_>>(), vec![1, 4, 8]);
        let mut tsv = Vec::new();
        write_summary(&rows, &mut tsv).unwrap();
        let tsv = String::from_utf8(tsv).unwrap();
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.starts_with("solver\tdim\tblock_size"));
    }

    #[test]
    fn inconsistent_schema_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let good = write(dir.path(), "good.jsonl", &[header(4, 0)]);
        let orphan = write(dir.path(), "orphan.jsonl", &[epoch(4, 0, 1, 1.0, None)]);
        let err = summarize_sweep(&[good.clone(), orphan]).unwrap_err().to_string();
        assert!(err.contains("orphan.jsonl"), "{err}");
        let mismatched = write(dir.path(), "mismatch.jsonl", &[header(4, 0), epoch(8, 0, 1, 1.0, None)]);
        let err = summarize_sweep(&[good, mismatched]).unwrap_err().to_string();
        assert!(err.contains("mismatch.jsonl:2"), "{err}");
    }
}
