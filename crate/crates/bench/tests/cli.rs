use std::path::Path;
use std::process::{Command, Output};

use ialspp_bench::{parse_metrics_log, Record};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ialspp-bench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_to(path: &Path, extra: &[&str]) -> Vec<Record> {
    let mut args = vec!["run", "--synthetic", "120,60,12,4,1", "--output", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = bench(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    parse_metrics_log(path).unwrap()
}

fn epochs(records: &[Record]) -> Vec<&ialspp_bench::EpochRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            Record::Epoch(e) => Some(e),
            Record::Run(_) => None,
        })
        .collect()
}

#[test]
fn ml20m_settings_log_one_line_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let records = run_to(
        &path,
        &["--solver", "ialspp", "--dim", "128", "--block_size", "64", "--epochs", "16", "--reg", "0.003", "--alpha0", "0.1"],
    );
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 17);
    let eps = epochs(&records);
    assert_eq!(eps.len(), 16);
    assert_eq!(eps.iter().map(|e| e.epoch).collect::<Vec<_>>(), (1..=16).collect::<Vec<_>>());
    for e in &eps {
        assert!(e.train_seconds >= 0.0 && e.eval_seconds >= 0.0);
        assert!((e.train_seconds - (e.gramian_seconds + e.solve_seconds + e.cache_seconds)).abs() < 1e-12);
        assert!(e.ndcg_at_100.is_some());
    }
    match &records[0] {
        Record::Run(h) => assert_eq!((h.dim, h.block_size, h.reg, h.alpha0), (128, 64, 0.003, 0.1)),
        Record::Epoch(_) => panic!("log must open with a run header"),
    }
}

#[test]
fn zero_epochs_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let records = run_to(&path, &["--epochs", "0", "--dim", "8", "--block_size", "4"]);
    assert_eq!(records.len(), 1);
    assert!(matches!(records[0], Record::Run(_)));
}

#[test]
fn block_size_sweep_gives_one_stream_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.jsonl");
    let records = run_to(&path, &["--dim", "16", "--block_size", "1,4,d", "--epochs", "2", "--eval_every", "2"]);
    let headers: Vec<usize> = records
        .iter()
        .filter_map(|r| match r {
            Record::Run(h) => Some(h.block_size),
            Record::Epoch(_) => None,
        })
        .collect();
    assert_eq!(headers, vec![1, 4, 16]);
    let eps = epochs(&records);
    assert_eq!(eps.len(), 6);
    // evaluated on epoch 2 only
    assert!(eps.iter().all(|e| e.ndcg_at_100.is_some() == (e.epoch == 2)));

    let summary = dir.path().join("summary.tsv");
    let out = bench(&["summarize", path.to_str().unwrap(), "--output", summary.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = std::fs::read_to_string(&summary).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("solver\tdim\tblock_size\t"));
    assert!(rows[1].starts_with("ialspp\t16\t1\t1\t2\t"));
}

#[test]
fn single_thread_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--dim", "8", "--block_size", "2", "--epochs", "3", "--threads", "1", "--seed", "5", "--loss"];
    let a = epochs(&run_to(&dir.path().join("a.jsonl"), &args))
        .iter()
        .map(|e| (e.recall_at_20, e.recall_at_50, e.ndcg_at_100, e.loss))
        .collect::<Vec<_>>();
    let b = epochs(&run_to(&dir.path().join("b.jsonl"), &args))
        .iter()
        .map(|e| (e.recall_at_20, e.recall_at_50, e.ndcg_at_100, e.loss))
        .collect::<Vec<_>>();
    assert_eq!(a, b);
    assert!(a.iter().all(|m| m.3.is_some()));
}

#[test]
fn repeats_are_logged_separately() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_to(&dir.path().join("r.jsonl"), &["--dim", "8", "--block_size", "4", "--epochs", "1", "--repeats", "2"]);
    let seeds: Vec<(usize, u64)> = records
        .iter()
        .filter_map(|r| match r {
            Record::Run(h) => Some((h.repeat, h.seed)),
            Record::Epoch(_) => None,
        })
        .collect();
    assert_eq!(seeds, vec![(0, 0), (1, 1)]);
}

#[test]
fn trains_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    let mut text = String::from("user_id\titem_id\n");
    for u in 0..60 {
        for k in 0..8 {
            text.push_str(&format!("user{u}\titem{}\n", (u * 7 + k * 5) % 40));
        }
    }
    std::fs::write(&train, text).unwrap();
    let path = dir.path().join("run.jsonl");
    let out = bench(&[
        "run",
        "--train_data",
        train.to_str().unwrap(),
        "--dim",
        "4",
        "--block_size",
        "2",
        "--epochs",
        "2",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(epochs(&parse_metrics_log(&path).unwrap()).len(), 2);
}

#[test]
fn missing_input_fails_with_diagnostic() {
    let out = bench(&["run", "--train_data", "/nonexistent/train.csv", "--dim", "4", "--block_size", "2"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/train.csv"), "{err}");

    let out = bench(&["run", "--dim", "4"]);
    assert!(!out.status.success());

    let out = bench(&["run", "--synthetic", "10,10,3,2,1", "--block_size", "0"]);
    assert!(!out.status.success());
}

#[test]
fn summarize_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("notes.jsonl");
    std::fs::write(&bad, "{\"hello\": 1}\n").unwrap();
    let out = bench(&["summarize", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("notes.jsonl:1"));
}
