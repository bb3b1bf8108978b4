use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn noisecov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisecov")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {stderr}"))
}

const SMALL_SPEC: &str = r#"{
  "heston": { "p": 3, "ticks_per_day": 400 },
  "noise": { "model": "m1" },
  "sampling": [{ "scheme": "sync", "delta": 2 }, { "scheme": "async", "lambda": 2 }],
  "K": [2, 3],
  "replications": 4,
  "seed": 11
}"#;

#[test]
fn missing_input_is_io_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = noisecov(&["estimate", "--input", "/no/such/file.csv", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["kind"], "io");
}

#[test]
fn malformed_input_reports_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "tick,asset,value\n1,A,0.1\n2,A,oops\n").unwrap();
    let out = noisecov(&["estimate", "--input", path(&input), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["kind"], "parse");
    assert!(err["message"].as_str().unwrap().contains("line 3"));
}

#[test]
fn estimate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ticks.csv");
    let mut csv = String::from("tick,asset,value\n");
    for t in 1..=40 {
        csv += &format!("{t},A,{}\n", (t as f64).sin());
        if t % 3 != 0 {
            csv += &format!("{t},B,{}\n", (t as f64 * 0.3).cos());
        }
    }
    fs::write(&input, csv).unwrap();
    let out_dir = dir.path().join("out");
    let out = noisecov(&["estimate", "--input", path(&input), "--out", path(&out_dir), "--K", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["raw.csv", "raw.json", "thresholded.csv", "thresholded.json", "pairs.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["inputs"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["estimator"]["window"]["k"], 2);
    let pairs = fs::read_to_string(out_dir.join("pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 4);
    assert!(pairs.starts_with(&noisecov::estimator::PAIR_CSV_HEADER.join(",")));
}

#[test]
fn single_asset_gives_one_by_one_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.csv");
    fs::write(&input, "tick,asset,value\n1,Z,0.5\n2,Z,-0.5\n3,Z,0.25\n").unwrap();
    let out_dir = dir.path().join("out");
    assert!(noisecov(&["estimate", "--input", path(&input), "--out", path(&out_dir)]).status.success());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("thresholded.json")).unwrap()).unwrap();
    assert_eq!(doc["p"], 1);
    assert_eq!(doc["entries"].as_array().unwrap().len(), 1);
    assert_eq!(doc["meta"]["diagonal_thresholded"], true);
    // log 1 = 0, so the cutoff vanishes and the entry survives.
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("raw.json")).unwrap()).unwrap();
    assert_eq!(doc["entries"], raw["entries"]);
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = noisecov(&["simulate", "--spec", path(&spec), "--out", path(&out), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    for f in ["replications.csv", "cells.csv", "table_rel_error.csv", "table_tpr.csv"] {
        let fa = fs::read(a.join(f)).unwrap();
        assert_eq!(fa, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(fa, fs::read(c.join(f)).unwrap(), "{f} differs across worker counts");
    }
    let table = fs::read_to_string(a.join("table_rel_error.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "p,K,sync_delta=2,async_lambda=2");
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn simulate_resumes_from_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let full = dir.path().join("full");
    assert!(noisecov(&["simulate", "--spec", path(&spec), "--out", path(&full)]).status.success());
    let rows = fs::read_to_string(full.join("replications.csv")).unwrap();

    // Keep the header, replication 0 and half of replication 1.
    let partial = dir.path().join("partial");
    fs::create_dir(&partial).unwrap();
    fs::copy(full.join("spec.json"), partial.join("spec.json")).unwrap();
    let kept: Vec<&str> = rows.lines().take(1 + 4 + 2).collect();
    fs::write(partial.join("replications.csv"), kept.join("\n") + "\n").unwrap();
    let o = noisecov(&["simulate", "--spec", path(&spec), "--out", path(&partial), "--resume"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(partial.join("replications.csv")).unwrap(), rows);
    assert_eq!(fs::read(partial.join("cells.csv")).unwrap(), fs::read(full.join("cells.csv")).unwrap());

    // A different seed must not silently mix with stored rows.
    let o = noisecov(&["simulate", "--spec", path(&spec), "--out", path(&partial), "--resume", "--seed", "99"]);
    assert_eq!(error_json(&o)["kind"], "config");
}

#[test]
fn aggregates_are_means_of_stored_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let out = dir.path().join("o");
    assert!(noisecov(&["simulate", "--spec", path(&spec), "--out", path(&out)]).status.success());
    let rows = noisecov::simlab::experiment::read_rows_csv(fs::File::open(out.join("replications.csv")).unwrap()).unwrap();
    let mut cells = csv::Reader::from_path(out.join("cells.csv")).unwrap();
    let headers = cells.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for rec in cells.records() {
        let rec = rec.unwrap();
        let k: usize = rec[col("K")].parse().unwrap();
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.scheme == rec[col("scheme")] && r.k == k)
            .map(|r| r.rel_frobenius)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let stored: f64 = rec[col("rel_error_x100_mean")].parse().unwrap();
        assert_eq!(stored, mean * 100.0);
    }
}

#[test]
fn zero_replications_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SMALL_SPEC.replace("\"replications\": 4", "\"replications\": 0")).unwrap();
    let o = noisecov(&["simulate", "--spec", path(&spec), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["kind"], "config");
}

#[test]
fn rate_check_synthetic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisecov(&["rate-check", "--synthetic-exponent", "-0.5", "--out", path(dir.path())]);
    assert!(o.status.success());
    let mut r = csv::Reader::from_path(dir.path().join("rate_slope.csv")).unwrap();
    let rec = r.records().next().unwrap().unwrap();
    let slope: f64 = rec[0].parse().unwrap();
    assert!((slope + 0.5).abs() < 1e-12, "{slope}");
    assert_eq!(&rec[5], "true");

    let o = noisecov(&["rate-check", "--synthetic-exponent", "-1", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(noisecov::cli::EXIT_RATE_BAND));
}

#[test]
fn rate_check_needs_three_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, SMALL_SPEC).unwrap();
    let o = noisecov(&["rate-check", "--spec", path(&spec), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["kind"], "config");
}
