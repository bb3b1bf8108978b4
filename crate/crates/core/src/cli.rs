//! Command-line front end: `estimate`, `simulate` and `rate-check`.
//!
//! Every failure is reported on stderr as one JSON object
//! `{"kind": ..., "message": ...}`. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | any error other than I/O |
//! | 2 | I/O error (missing input, unwritable output) or bad usage |
//! | 3 | more than 1% of replication cells failed |
//! | 4 | rate-check slope outside the band |

use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{estimate, write_pair_csv, EstimatorConfig, ThresholdRule, WindowRule};
use crate::metrics::{rate_check, RateFit};
use crate::panel::AsyncPanel;
use crate::simlab::experiment::{
    read_rows_csv, write_cells_csv, write_rows_csv, write_table_csv, CellSummary,
};
use crate::simlab::{aggregate, Experiment, ExperimentSpec, ReplicationRow, SamplingScheme};

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FAILURE_RATE: i32 = 3;
pub const EXIT_RATE_BAND: i32 = 4;

/// Fraction of failed cells above which `simulate` exits nonzero.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(name = "noisecov", version, about = "Noise covariance estimation for asynchronous tick data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the noise covariance of a tick CSV (`tick,asset,value`).
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment from a JSON spec.
    Simulate(SimulateArgs),
    /// Fit the log-log slope of unthresholded max-abs error against `n_*`.
    RateCheck(RateCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdKind {
    Universal,
    Adaptive,
    None,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Thresholding rule.
    #[arg(long, value_enum)]
    pub threshold: Option<ThresholdKind>,
    /// β of the universal rule, or of the fallback used for pairs whose
    /// long-run variance cannot be computed.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Never threshold diagonal entries.
    #[arg(long)]
    pub diagonal_exempt: bool,
}

impl ThresholdArgs {
    fn rule(&self, default: ThresholdRule) -> ThresholdRule {
        let beta = self.beta.unwrap_or(2.0);
        match self.threshold {
            Some(ThresholdKind::Universal) => ThresholdRule::Universal { beta },
            Some(ThresholdKind::Adaptive) => ThresholdRule::Adaptive { fallback_beta: beta },
            Some(ThresholdKind::None) => ThresholdRule::None,
            None => match (default, self.beta) {
                (ThresholdRule::Universal { .. }, Some(b)) => ThresholdRule::Universal { beta: b },
                (ThresholdRule::Adaptive { .. }, Some(b)) => ThresholdRule::Adaptive { fallback_beta: b },
                (rule, _) => rule,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Tick CSV with header `tick,asset,value`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Length of one tick in years.
    #[arg(long, default_value_t = 1.0)]
    pub tick_duration: f64,
    /// Index window: K common observations on each side.
    #[arg(long = "K", conflicts_with_all = ["xi", "rate_kappa"])]
    pub k: Option<usize>,
    /// Time window radius in years.
    #[arg(long, conflicts_with = "rate_kappa")]
    pub xi: Option<f64>,
    /// Time window `xi = c · n_*^(-kappa)`.
    #[arg(long)]
    pub rate_kappa: Option<f64>,
    #[arg(long, default_value_t = 1.0, requires = "rate_kappa")]
    pub rate_c: f64,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Recorded in the manifest; estimation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's K list (comma separated).
    #[arg(long = "K", value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    /// Keep complete replications already present in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct RateCheckArgs {
    /// Experiment spec with at least three synchronous Δ values.
    #[arg(long, required_unless_present = "synthetic_exponent")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[arg(long, default_value_t = -0.65, allow_hyphen_values = true)]
    pub band_lo: f64,
    #[arg(long, default_value_t = -0.35, allow_hyphen_values = true)]
    pub band_hi: f64,
    /// Skip simulation and fit the exact power law `err = n^e` at `--synthetic-n`.
    #[arg(long, allow_hyphen_values = true)]
    pub synthetic_exponent: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1000,4000,16000")]
    pub synthetic_n: Vec<f64>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

pub fn error_json(e: &Error) -> String {
    json!({ "kind": e.kind(), "message": e.to_string() }).to_string()
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_ERROR,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let workers = match &cli.command {
        Command::Estimate(a) => a.workers,
        Command::Simulate(a) => a.workers,
        Command::RateCheck(a) => a.workers,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers as usize)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::RateCheck(a) => cmd_rate_check(a),
    })
}

fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn manifest(command: &str, seed: u64, workers: u64, config: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "workers": workers,
        "config": config,
        "inputs": extra,
    })
}

fn estimator_config(a: &EstimateArgs) -> EstimatorConfig {
    let window = match (a.k, a.xi, a.rate_kappa) {
        (_, Some(xi), _) => WindowRule::Time { xi },
        (_, _, Some(kappa)) => WindowRule::Rate { c: a.rate_c, kappa },
        (Some(k), _, _) => WindowRule::Index { k },
        _ => EstimatorConfig::default().window,
    };
    let defaults = EstimatorConfig::default();
    EstimatorConfig {
        window,
        threshold: a.threshold.rule(defaults.threshold),
        diagonal_exempt: a.threshold.diagonal_exempt,
        ..defaults
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<i32> {
    let config = estimator_config(a);
    config.validate()?;
    let panel = AsyncPanel::load_csv(&a.input, a.tick_duration)?;
    let input_hash = sha256_file(&a.input)?;
    let est = estimate(&panel, &config)?;
    create_out_dir(&a.out)?;
    let assets = panel.assets();
    for (name, m, thresholded) in [("raw", &est.raw, false), ("thresholded", &est.thresholded, true)] {
        m.write_csv(assets, create(&a.out.join(format!("{name}.csv")))?)?;
        write_json(
            &a.out.join(format!("{name}.json")),
            &m.to_document(assets, est.meta(thresholded)),
        )?;
    }
    write_pair_csv(&est.pairs, assets, create(&a.out.join("pairs.csv"))?)?;
    write_json(
        &a.out.join("manifest.json"),
        &manifest(
            "estimate",
            a.seed,
            a.workers,
            json!({
                "estimator": config,
                "tick_duration": a.tick_duration,
                "n_star_used": est.n_star_used,
                "xi_used": est.xi_used,
                "summary": est.summary,
            }),
            json!({ "input": a.input, "sha256": input_hash }),
        ),
    )?;
    Ok(0)
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: ExperimentSpec = serde_json::from_str(&text)?;
    Ok(spec)
}

/// Result of running (or resuming) an experiment into a directory.
struct RunOutcome {
    spec: ExperimentSpec,
    rows: Vec<ReplicationRow>,
    cells: Vec<CellSummary>,
}

/// Replications run between flushes of `replications.csv`.
const CHECKPOINT_EVERY: u64 = 8;

fn run_experiment(spec: ExperimentSpec, out: &Path, resume: bool, command: &str, workers: u64, spec_path: &Path) -> Result<RunOutcome> {
    let exp = Experiment::new(spec.clone())?;
    create_out_dir(out)?;
    let spec_file = out.join("spec.json");
    let rows_file = out.join("replications.csv");
    let per_rep = spec.sampling.len() * spec.ks.len();

    let mut rows: Vec<ReplicationRow> = Vec::new();
    if resume && rows_file.exists() {
        let stored: ExperimentSpec = load_spec(&spec_file)?;
        if stored != spec {
            return Err(Error::InvalidConfig(
                "cannot resume: spec differs from the one stored in the output directory".into(),
            ));
        }
        let file = File::open(&rows_file).map_err(|e| Error::io(&rows_file, e))?;
        rows = read_rows_csv(file)?;
        rows.retain(|r| r.replication < spec.replications);
        let complete: std::collections::BTreeSet<u64> = rows
            .iter()
            .map(|r| r.replication)
            .filter(|rep| rows.iter().filter(|r| r.replication == *rep).count() == per_rep)
            .collect();
        rows.retain(|r| complete.contains(&r.replication));
    }
    write_json(&spec_file, &spec)?;

    let done: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.replication).collect();
    let todo: Vec<u64> = (0..spec.replications).filter(|r| !done.contains(r)).collect();
    for chunk in todo.chunks(CHECKPOINT_EVERY.max(workers) as usize) {
        rows.extend(exp.run(chunk.iter().copied()));
        rows.sort_by_key(|r| r.replication);
        write_rows_csv(&rows, create(&rows_file)?)?;
    }
    rows.sort_by_key(|r| r.replication);
    write_rows_csv(&rows, create(&rows_file)?)?;

    let cells = aggregate(&spec, &rows);
    write_cells_csv(&cells, create(&out.join("cells.csv"))?)?;
    write_table_csv(&spec, &cells, |c| c.rel_frobenius.mean * 100.0, create(&out.join("table_rel_error.csv"))?)?;
    write_table_csv(&spec, &cells, |c| c.tpr.mean * 100.0, create(&out.join("table_tpr.csv"))?)?;
    write_table_csv(&spec, &cells, |c| c.fpr.mean * 100.0, create(&out.join("table_fpr.csv"))?)?;
    write_json(
        &out.join("manifest.json"),
        &manifest(
            command,
            spec.seed,
            workers,
            serde_json::to_value(&spec)?,
            json!({ "spec": spec_path, "sha256": sha256_file(spec_path)? }),
        ),
    )?;
    Ok(RunOutcome { spec, rows, cells })
}

fn failure_fraction(rows: &[ReplicationRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.failed()).count() as f64 / rows.len() as f64
}

fn apply_overrides(spec: &mut ExperimentSpec, seed: Option<u64>, ks: Option<&Vec<usize>>, threshold: Option<&ThresholdArgs>) {
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(ks) = ks {
        spec.ks = ks.clone();
    }
    if let Some(t) = threshold {
        spec.threshold = t.rule(spec.threshold);
        spec.diagonal_exempt |= t.diagonal_exempt;
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let mut spec = load_spec(&a.spec)?;
    apply_overrides(&mut spec, a.seed, a.k.as_ref(), Some(&a.threshold));
    let outcome = run_experiment(spec, &a.out, a.resume, "simulate", a.workers, &a.spec)?;
    let frac = failure_fraction(&outcome.rows);
    if frac > MAX_FAILURE_FRACTION {
        eprintln!(
            "{}",
            json!({ "kind": "simulation", "message": format!("{:.2}% of replication cells failed", frac * 100.0) })
        );
        return Ok(EXIT_FAILURE_RATE);
    }
    Ok(0)
}

/// One point of the rate report.
#[derive(Debug, Clone, Serialize)]
struct RatePoint {
    scheme: String,
    n_star: f64,
    max_abs_raw: f64,
    max_abs_raw_se: f64,
}

fn write_rate_report(out: &Path, points: &[RatePoint], fit: &RateFit, lo: f64, hi: f64) -> Result<bool> {
    let pass = fit.slope >= lo && fit.slope <= hi;
    let mut w = csv::Writer::from_writer(create(&out.join("rate_points.csv"))?);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    let mut w = csv::Writer::from_writer(create(&out.join("rate_slope.csv"))?);
    w.write_record(["slope", "intercept", "points", "band_lo", "band_hi", "pass"])?;
    w.write_record([
        fit.slope.to_string(),
        fit.intercept.to_string(),
        fit.points.to_string(),
        lo.to_string(),
        hi.to_string(),
        pass.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(pass)
}

fn cmd_rate_check(a: &RateCheckArgs) -> Result<i32> {
    if !(a.band_lo <= a.band_hi) {
        return Err(Error::InvalidConfig(format!("empty band [{}, {}]", a.band_lo, a.band_hi)));
    }
    let points: Vec<RatePoint> = if let Some(e) = a.synthetic_exponent {
        create_out_dir(&a.out)?;
        let points = a
            .synthetic_n
            .iter()
            .map(|&n| RatePoint {
                scheme: "synthetic".into(),
                n_star: n,
                max_abs_raw: n.powf(e),
                max_abs_raw_se: 0.0,
            })
            .collect();
        write_json(
            &a.out.join("manifest.json"),
            &manifest("rate-check", 0, a.workers, json!({ "synthetic_exponent": e, "synthetic_n": a.synthetic_n }), json!(null)),
        )?;
        points
    } else {
        let spec_path = a.spec.as_ref().expect("clap requires --spec without --synthetic-exponent");
        let mut spec = load_spec(spec_path)?;
        apply_overrides(&mut spec, a.seed, None, None);
        let deltas = spec
            .sampling
            .iter()
            .filter(|s| matches!(s, SamplingScheme::Sync { .. }))
            .count();
        if deltas < 3 {
            return Err(Error::InvalidConfig(format!(
                "rate check needs at least 3 synchronous delta values, got {deltas}"
            )));
        }
        // Only unthresholded errors enter the fit.
        spec.threshold = ThresholdRule::None;
        spec.ks.truncate(1);
        let outcome = run_experiment(spec, &a.out, false, "rate-check", a.workers, spec_path)?;
        if failure_fraction(&outcome.rows) > MAX_FAILURE_FRACTION {
            return Ok(EXIT_FAILURE_RATE);
        }
        outcome
            .spec
            .sampling
            .iter()
            .zip(&outcome.cells)
            .filter(|(s, _)| matches!(s, SamplingScheme::Sync { .. }))
            .map(|(_, c)| RatePoint {
                scheme: c.scheme.clone(),
                n_star: c.mean_n_star,
                max_abs_raw: c.max_abs_raw.mean,
                max_abs_raw_se: c.max_abs_raw.se,
            })
            .collect()
    };
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n_star, p.max_abs_raw)).collect();
    let fit = rate_check(&pairs)?;
    let pass = write_rate_report(&a.out, &points, &fit, a.band_lo, a.band_hi)?;
    println!("slope {:.4} in [{}, {}]: {}", fit.slope, a.band_lo, a.band_hi, if pass { "pass" } else { "fail" });
    Ok(if pass { 0 } else { EXIT_RATE_BAND })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "noisecov", "estimate", "--input", "a.csv", "--out", "o", "--K", "4", "--threshold", "universal", "--beta", "1.5",
        ])
        .unwrap();
        let Command::Estimate(a) = cli.command else { panic!() };
        let cfg = estimator_config(&a);
        assert_eq!(cfg.window, WindowRule::Index { k: 4 });
        assert_eq!(cfg.threshold, ThresholdRule::Universal { beta: 1.5 });
        assert!(Cli::try_parse_from(["noisecov", "estimate", "--input", "a", "--out", "o", "--K", "3", "--xi", "0.1"]).is_err());
        assert!(Cli::try_parse_from(["noisecov", "simulate", "--spec", "s", "--out", "o", "--workers", "0"]).is_err());
    }

    #[test]
    fn threshold_override_keeps_default_kind() {
        let t = ThresholdArgs { threshold: None, beta: Some(3.0), diagonal_exempt: false };
        assert_eq!(t.rule(ThresholdRule::Universal { beta: 2.0 }), ThresholdRule::Universal { beta: 3.0 });
        assert_eq!(t.rule(ThresholdRule::None), ThresholdRule::None);
    }

    #[test]
    fn error_json_shape() {
        let e = Error::InvalidConfig("bad".into());
        let v: serde_json::Value = serde_json::from_str(&error_json(&e)).unwrap();
        assert_eq!(v["kind"], "config");
        assert_eq!(exit_code(&e), EXIT_ERROR);
    }
}
