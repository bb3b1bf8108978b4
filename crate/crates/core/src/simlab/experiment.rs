//! Monte Carlo experiments.
//!
//! One replication simulates a full day of latent paths and lattice noise,
//! then derives a panel for every sampling scheme in the spec and estimates
//! with every `K`. All schemes of a replication share the same latent day,
//! so columns of a table differ only in how the day was observed.
//!
//! Replications are keyed by index and draw from dedicated RNG streams; the
//! rows produced for a given `(spec, index)` are identical no matter how
//! many workers run or in what order.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig, ThresholdRule, WindowRule};
use crate::linalg::SymmetricFactor;
use crate::matrix::CovMatrix;
use crate::metrics::{difference, max_abs_diff, rel_frobenius, spectral_norm, tpr_fpr};
use crate::panel::AsyncPanel;

use super::heston::{build_brownian_corr, heston_paths, HestonConfig, LatentPaths};
use super::noise::{noise_cov, sample_noise, NoiseDraws, NoiseModel};
use super::rng::{stream, Purpose};
use super::sampling::{sample_async, sample_sync, SamplingScheme};

fn one_or_many<'de, D>(de: D) -> std::result::Result<Vec<SamplingScheme>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(SamplingScheme),
        Many(Vec<SamplingScheme>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

fn default_threshold() -> ThresholdRule {
    ThresholdRule::Adaptive { fallback_beta: 2.0 }
}

/// A full Monte Carlo scenario, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub heston: HestonConfig,
    pub noise: NoiseModel,
    /// One scheme or a list; each becomes a table column.
    #[serde(deserialize_with = "one_or_many")]
    pub sampling: Vec<SamplingScheme>,
    #[serde(rename = "K")]
    pub ks: Vec<usize>,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub diagonal_exempt: bool,
    /// Replace the Heston paths by `X ≡ 0`.
    #[serde(default)]
    pub pure_noise: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.heston.validate()?;
        self.noise.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidConfig("K list must be nonempty with K >= 1".into()));
        }
        if self.sampling.is_empty() {
            return Err(Error::InvalidConfig("at least one sampling scheme is required".into()));
        }
        for s in &self.sampling {
            s.validate(self.heston.ticks_per_day)?;
        }
        self.estimator_config(self.ks[0]).validate()
    }

    pub fn estimator_config(&self, k: usize) -> EstimatorConfig {
        EstimatorConfig {
            window: WindowRule::Index { k },
            threshold: self.threshold,
            diagonal_exempt: self.diagonal_exempt,
            ..EstimatorConfig::default()
        }
    }

    pub fn tick_duration(&self) -> f64 {
        self.heston.dt()
    }
}

/// Metrics of one `(replication, scheme, K)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: u64,
    pub scheme: String,
    pub k: usize,
    pub p: usize,
    pub n_star: usize,
    pub rel_frobenius: f64,
    pub max_abs: f64,
    pub spectral_error: Option<f64>,
    pub tpr: f64,
    pub fpr: f64,
    pub fpr_applicable: bool,
    pub rel_frobenius_raw: f64,
    pub max_abs_raw: f64,
    /// Empty on success.
    pub error: String,
}

impl ReplicationRow {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }

    fn failure(replication: u64, scheme: String, k: usize, p: usize, err: &Error) -> Self {
        Self {
            replication,
            scheme,
            k,
            p,
            n_star: 0,
            rel_frobenius: f64::NAN,
            max_abs: f64::NAN,
            spectral_error: None,
            tpr: f64::NAN,
            fpr: f64::NAN,
            fpr_applicable: false,
            rel_frobenius_raw: f64::NAN,
            max_abs_raw: f64::NAN,
            error: err.to_string(),
        }
    }
}

/// A validated spec with its derived matrices.
#[derive(Debug, Clone)]
pub struct Experiment {
    spec: ExperimentSpec,
    truth: CovMatrix,
    rho_factor: SymmetricFactor,
    noise_factor: SymmetricFactor,
}

impl Experiment {
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let p = spec.heston.p;
        let truth = noise_cov(&spec.noise, p, spec.seed);
        let rho = build_brownian_corr(p, spec.heston.corr_decay);
        Ok(Self {
            rho_factor: SymmetricFactor::new(&rho)?,
            noise_factor: SymmetricFactor::new(&truth)?,
            truth,
            spec,
        })
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    /// The noise covariance `Σ_u` being estimated.
    pub fn truth(&self) -> &CovMatrix {
        &self.truth
    }

    /// Latent paths and per-tick noise of replication `rep`.
    pub fn simulate_day(&self, rep: u64) -> Result<(LatentPaths, NoiseDraws)> {
        let cfg = &self.spec.heston;
        let paths = if self.spec.pure_noise {
            LatentPaths::zeros(cfg.p, cfg.ticks_per_day)
        } else {
            let mut rng = stream(self.spec.seed, Purpose::Latent, 0, rep);
            heston_paths(cfg, &self.rho_factor, &mut rng)?
        };
        let mut rng = stream(self.spec.seed, Purpose::Noise, 0, rep);
        let noise = sample_noise(&self.noise_factor, cfg.ticks_per_day, &mut rng);
        Ok((paths, noise))
    }

    /// The panel that scheme `scheme_idx` observes on replication `rep`'s day.
    pub fn observe(
        &self,
        paths: &LatentPaths,
        noise: &NoiseDraws,
        scheme_idx: usize,
        rep: u64,
    ) -> Result<AsyncPanel> {
        let dt = self.spec.tick_duration();
        match self.spec.sampling[scheme_idx] {
            SamplingScheme::Sync { delta } => sample_sync(paths, noise, delta, dt),
            SamplingScheme::Async { lambda, arrival } => {
                let mut rng = stream(self.spec.seed, Purpose::Arrivals, scheme_idx as u64, rep);
                sample_async(paths, noise, lambda, arrival, dt, &mut rng)
            }
        }
    }

    pub fn panel(&self, scheme_idx: usize, rep: u64) -> Result<AsyncPanel> {
        let (paths, noise) = self.simulate_day(rep)?;
        self.observe(&paths, &noise, scheme_idx, rep)
    }

    fn evaluate(&self, panel: &AsyncPanel, k: usize, rep: u64, scheme: &str) -> Result<ReplicationRow> {
        let est = estimate(panel, &self.spec.estimator_config(k))?;
        let truth = &self.truth;
        let support = tpr_fpr(&est.thresholded, truth)?;
        Ok(ReplicationRow {
            replication: rep,
            scheme: scheme.to_owned(),
            k,
            p: truth.dim(),
            n_star: est.summary.n_star,
            rel_frobenius: rel_frobenius(&est.thresholded, truth)?,
            max_abs: max_abs_diff(&est.thresholded, truth)?,
            spectral_error: spectral_norm(&difference(&est.thresholded, truth)?).ok(),
            tpr: support.tpr,
            fpr: support.fpr,
            fpr_applicable: support.fpr_applicable,
            rel_frobenius_raw: rel_frobenius(&est.raw, truth)?,
            max_abs_raw: max_abs_diff(&est.raw, truth)?,
            error: String::new(),
        })
    }

    /// All rows of one replication, ordered by scheme then `K`.
    ///
    /// Failures are recorded in the rows rather than aborting the run.
    pub fn run_replication(&self, rep: u64) -> Vec<ReplicationRow> {
        let p = self.spec.heston.p;
        let mut rows = Vec::with_capacity(self.spec.sampling.len() * self.spec.ks.len());
        let day = self.simulate_day(rep);
        for (s_idx, scheme) in self.spec.sampling.iter().enumerate() {
            let label = scheme.label();
            let panel = day
                .as_ref()
                .map_err(|e| Error::Simulation(e.to_string()))
                .and_then(|(paths, noise)| self.observe(paths, noise, s_idx, rep));
            for &k in &self.spec.ks {
                let row = panel
                    .as_ref()
                    .map_err(|e| Error::Simulation(e.to_string()))
                    .and_then(|panel| self.evaluate(panel, k, rep, &label));
                rows.push(row.unwrap_or_else(|e| ReplicationRow::failure(rep, label.clone(), k, p, &e)));
            }
        }
        rows
    }

    /// Runs the given replications on the current rayon pool, returning rows in index order.
    pub fn run<I>(&self, reps: I) -> Vec<ReplicationRow>
    where
        I: IntoIterator<Item = u64>,
    {
        let reps: Vec<u64> = reps.into_iter().collect();
        reps.into_par_iter()
            .map(|rep| self.run_replication(rep))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }

    pub fn run_all(&self) -> Vec<ReplicationRow> {
        self.run(0..self.spec.replications)
    }
}

/// Mean and Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

/// Aggregate over the replications of one `(scheme, K)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub p: usize,
    pub k: usize,
    pub scheme: String,
    pub replications: usize,
    pub failures: usize,
    pub mean_n_star: f64,
    pub rel_frobenius: MeanSe,
    pub max_abs: MeanSe,
    pub spectral_error: MeanSe,
    pub tpr: MeanSe,
    pub fpr: MeanSe,
    pub fpr_applicable: bool,
    pub rel_frobenius_raw: MeanSe,
    pub max_abs_raw: MeanSe,
}

/// Cells in spec order (schemes outer, `K` inner), computed only from `rows`.
pub fn aggregate(spec: &ExperimentSpec, rows: &[ReplicationRow]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for scheme in &spec.sampling {
        let label = scheme.label();
        for &k in &spec.ks {
            let all: Vec<&ReplicationRow> =
                rows.iter().filter(|r| r.scheme == label && r.k == k).collect();
            let ok: Vec<&ReplicationRow> = all.iter().copied().filter(|r| !r.failed()).collect();
            let col = |f: fn(&ReplicationRow) -> f64| MeanSe::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let spectral: Vec<f64> = ok.iter().filter_map(|r| r.spectral_error).collect();
            cells.push(CellSummary {
                p: spec.heston.p,
                k,
                scheme: label.clone(),
                replications: ok.len(),
                failures: all.len() - ok.len(),
                mean_n_star: col(|r| r.n_star as f64).mean,
                rel_frobenius: col(|r| r.rel_frobenius),
                max_abs: col(|r| r.max_abs),
                spectral_error: MeanSe::of(&spectral),
                tpr: col(|r| r.tpr),
                fpr: col(|r| r.fpr),
                fpr_applicable: ok.iter().all(|r| r.fpr_applicable),
                rel_frobenius_raw: col(|r| r.rel_frobenius_raw),
                max_abs_raw: col(|r| r.max_abs_raw),
            });
        }
    }
    cells
}

pub const CELL_CSV_HEADER: [&str; 21] = [
    "p",
    "K",
    "scheme",
    "replications",
    "failures",
    "mean_n_star",
    "rel_error_x100_mean",
    "rel_error_x100_se",
    "max_abs_mean",
    "max_abs_se",
    "spectral_error_mean",
    "spectral_error_se",
    "tpr_x100_mean",
    "tpr_x100_se",
    "fpr_x100_mean",
    "fpr_x100_se",
    "fpr_applicable",
    "rel_error_raw_x100_mean",
    "rel_error_raw_x100_se",
    "max_abs_raw_mean",
    "max_abs_raw_se",
];

pub fn write_cells_csv<W: Write>(cells: &[CellSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CELL_CSV_HEADER)?;
    for c in cells {
        let pct = |m: MeanSe| [(m.mean * 100.0).to_string(), (m.se * 100.0).to_string()];
        let raw = |m: MeanSe| [m.mean.to_string(), m.se.to_string()];
        let mut rec = vec![
            c.p.to_string(),
            c.k.to_string(),
            c.scheme.clone(),
            c.replications.to_string(),
            c.failures.to_string(),
            c.mean_n_star.to_string(),
        ];
        rec.extend(pct(c.rel_frobenius));
        rec.extend(raw(c.max_abs));
        rec.extend(raw(c.spectral_error));
        rec.extend(pct(c.tpr));
        rec.extend(pct(c.fpr));
        rec.push(c.fpr_applicable.to_string());
        rec.extend(pct(c.rel_frobenius_raw));
        rec.extend(raw(c.max_abs_raw));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Table laid out like the published one: rows `(p, K)`, one column per scheme.
pub fn write_table_csv<W: Write>(
    spec: &ExperimentSpec,
    cells: &[CellSummary],
    metric: fn(&CellSummary) -> f64,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["p".to_string(), "K".to_string()];
    header.extend(spec.sampling.iter().map(|s| s.label()));
    w.write_record(&header)?;
    for &k in &spec.ks {
        let mut rec = vec![spec.heston.p.to_string(), k.to_string()];
        for s in &spec.sampling {
            let label = s.label();
            let v = cells
                .iter()
                .find(|c| c.k == k && c.scheme == label)
                .map_or(f64::NAN, metric);
            rec.push(format!("{v:.4}"));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_rows_csv<W: Write>(rows: &[ReplicationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(reader: R) -> Result<Vec<ReplicationRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
