//! Noise-covariance estimation over a whole panel.
//!
//! Every pair `(i, j)` with `i ≤ j` is an independent task: intersect the two
//! grids, run the localized estimator, and (for adaptive thresholding) reduce
//! the pair's ζ series to a long-run variance. Tasks run on the rayon pool and
//! are collected in pair order, so output does not depend on scheduling.

mod local;
mod longrun;
mod threshold;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use local::{local_cov_k, local_cov_xi, ZetaSeries};
pub use longrun::{
    andrews_bandwidth, ar1_coeff, autocovariances, longrun_variance, qs_kernel, Ar1Fit, Kernel,
    AR1_CLAMP, BANDWIDTH_EPS,
};
pub use threshold::{
    adaptive_cutoff, longrun_stats, threshold_adaptive, threshold_universal, universal_cutoff,
    AdaptiveDecision, LongRunStats,
};

use crate::error::{Error, Result};
use crate::matrix::{CovMatrix, MatrixMeta};
use crate::panel::{AsyncPanel, PanelSummary};

/// How the localization neighborhood is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WindowRule {
    /// All common observations within `xi` years.
    Time { xi: f64 },
    /// `k` common observations on each side.
    Index { k: usize },
    /// Time window `xi = c · n_*^{-kappa}`.
    Rate {
        #[serde(default = "default_rate_c")]
        c: f64,
        kappa: f64,
    },
}

fn default_rate_c() -> f64 {
    1.0
}

impl WindowRule {
    pub fn describe(&self) -> String {
        match self {
            WindowRule::Time { xi } => format!("time(xi={xi})"),
            WindowRule::Index { k } => format!("index(K={k})"),
            WindowRule::Rate { c, kappa } => format!("rate(c={c},kappa={kappa})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    None,
    /// Single cutoff `beta · (log p / n_*)^{1/2}`.
    Universal { beta: f64 },
    /// Entry-wise cutoffs from each pair's long-run variance.
    Adaptive {
        #[serde(default = "default_beta")]
        fallback_beta: f64,
    },
}

fn default_beta() -> f64 {
    2.0
}

impl ThresholdRule {
    pub fn describe(&self) -> String {
        match self {
            ThresholdRule::None => "none".into(),
            ThresholdRule::Universal { beta } => format!("universal(beta={beta})"),
            ThresholdRule::Adaptive { fallback_beta } => {
                format!("adaptive(fallback_beta={fallback_beta})")
            }
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub window: WindowRule,
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub diagonal_exempt: bool,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default = "default_true")]
    pub clamp_negative_theta: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: WindowRule::Index { k: 6 },
            threshold: ThresholdRule::Adaptive {
                fallback_beta: default_beta(),
            },
            diagonal_exempt: false,
            kernel: Kernel::QuadraticSpectral,
            clamp_negative_theta: true,
        }
    }
}

impl EstimatorConfig {
    pub fn with_window(mut self, window: WindowRule) -> Self {
        self.window = window;
        self
    }

    pub fn with_threshold(mut self, threshold: ThresholdRule) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.window {
            WindowRule::Time { xi } if !(xi > 0.0 && xi.is_finite()) => {
                return Err(Error::InvalidConfig(format!("xi must be positive, got {xi}")))
            }
            WindowRule::Index { k } if k == 0 => {
                return Err(Error::InvalidConfig("K must be at least 1".into()))
            }
            WindowRule::Rate { c, kappa } if !(c > 0.0 && kappa > 0.5 && kappa <= 1.0) => {
                return Err(Error::InvalidConfig(format!(
                    "rate rule needs c > 0 and kappa in (1/2, 1], got c={c}, kappa={kappa}"
                )))
            }
            _ => {}
        }
        match self.threshold {
            ThresholdRule::Universal { beta } | ThresholdRule::Adaptive { fallback_beta: beta }
                if !(beta >= 0.0 && beta.is_finite()) =>
            {
                Err(Error::InvalidConfig(format!("beta must be nonnegative, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Sparsity class: variances at most `m` and row-wise `Σ_j |σ_ij|^q ≤ c_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityClassSpec {
    pub q: f64,
    pub c_p: f64,
    pub m: f64,
}

impl SparsityClassSpec {
    pub fn new(q: f64, c_p: f64, m: f64) -> Result<Self> {
        if !((0.0..1.0).contains(&q) && c_p > 0.0 && m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sparsity class needs q in [0,1), c_p > 0, M > 0; got q={q}, c_p={c_p}, M={m}"
            )));
        }
        Ok(Self { q, c_p, m })
    }

    pub fn contains(&self, sigma: &CovMatrix) -> bool {
        let p = sigma.dim();
        (0..p).all(|i| {
            let row_mass: f64 = sigma
                .row(i)
                .iter()
                .map(|v| {
                    if self.q == 0.0 {
                        f64::from(u8::from(*v != 0.0))
                    } else {
                        v.abs().powf(self.q)
                    }
                })
                .sum();
            sigma.get(i, i) <= self.m && row_mass <= self.c_p
        })
    }
}

/// ζ series per pair, stored in upper-triangular order.
#[derive(Debug, Clone, Default)]
pub struct ZetaStore {
    p: usize,
    series: Vec<Option<ZetaSeries>>,
}

#[inline]
fn tri_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * p - i * (i + 1) / 2 + j
}

impl ZetaStore {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            series: vec![None; p * (p + 1) / 2],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&ZetaSeries> {
        self.series[tri_index(self.p, i, j)].as_ref()
    }

    pub fn insert(&mut self, i: usize, j: usize, zeta: ZetaSeries) {
        let idx = tri_index(self.p, i, j);
        self.series[idx] = Some(zeta);
    }
}

/// Why a pair has no estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Ok,
    EmptyGrid,
    TooFewObservations,
    NoNeighbors,
}

impl PairStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PairStatus::Ok => "ok",
            PairStatus::EmptyGrid => "empty_grid",
            PairStatus::TooFewObservations => "too_few_observations",
            PairStatus::NoNeighbors => "no_neighbors",
        }
    }
}

/// Diagnostics for one `(i, j)` entry, `i ≤ j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub n_pair: usize,
    /// Raw estimate; 0 for pairs that could not be estimated.
    pub estimate: f64,
    pub status: PairStatus,
    pub longrun: Option<LongRunStats>,
    pub cutoff: Option<f64>,
    pub kept: bool,
    pub universal_fallback: bool,
}

#[derive(Debug, Clone, Copy)]
enum ResolvedWindow {
    Time(f64),
    Index(usize),
}

impl ResolvedWindow {
    fn resolve(rule: WindowRule, summary: &PanelSummary) -> Result<Self> {
        Ok(match rule {
            WindowRule::Time { xi } => Self::Time(xi),
            WindowRule::Index { k } => Self::Index(k),
            WindowRule::Rate { c, kappa } => {
                if summary.n_star < 2 {
                    return Err(Error::InvalidConfig(
                        "rate window rule needs every pair to overlap in at least 2 ticks".into(),
                    ));
                }
                Self::Time(c * (summary.n_star as f64).powf(-kappa))
            }
        })
    }

    fn xi(self) -> Option<f64> {
        match self {
            Self::Time(xi) => Some(xi),
            Self::Index(_) => None,
        }
    }
}

struct PairOutcome<T> {
    i: usize,
    j: usize,
    n_pair: usize,
    result: std::result::Result<(f64, T), PairStatus>,
}

fn upper_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect()
}

/// Runs the localized estimator on every pair and maps each ζ series through `reduce`.
fn run_pairs<T, F>(panel: &AsyncPanel, window: ResolvedWindow, reduce: F) -> Vec<PairOutcome<T>>
where
    T: Send,
    F: Fn(ZetaSeries) -> T + Sync,
{
    let tick_duration = panel.tick_duration();
    upper_pairs(panel.p())
        .into_par_iter()
        .map(|(i, j)| {
            let grid = match panel.pair_intersection(i, j) {
                Ok(g) => g,
                Err(_) => {
                    return PairOutcome {
                        i,
                        j,
                        n_pair: 0,
                        result: Err(PairStatus::EmptyGrid),
                    }
                }
            };
            let n_pair = grid.len();
            if n_pair < 2 {
                return PairOutcome {
                    i,
                    j,
                    n_pair,
                    result: Err(PairStatus::TooFewObservations),
                };
            }
            let fitted = match window {
                ResolvedWindow::Time(xi) => local_cov_xi(&grid, xi, tick_duration),
                ResolvedWindow::Index(k) => local_cov_k(&grid, k),
            };
            let result = match fitted {
                Ok((est, zeta)) => Ok((est, reduce(zeta))),
                Err(_) => Err(PairStatus::NoNeighbors),
            };
            PairOutcome {
                i,
                j,
                n_pair,
                result,
            }
        })
        .collect()
}

fn check_diagonal<T>(outcomes: &[PairOutcome<T>]) -> Result<()> {
    for o in outcomes {
        if o.i == o.j {
            if let Err(status) = o.result {
                return Err(Error::Unestimable {
                    i: o.i,
                    j: o.j,
                    reason: format!("variance of asset {} is unestimable ({})", o.i, status.as_str()),
                });
            }
        }
    }
    Ok(())
}

/// Unthresholded estimate, the ζ series of every estimable pair, and the panel summary.
#[derive(Debug, Clone)]
pub struct MatrixEstimate {
    pub raw: CovMatrix,
    pub zeta: ZetaStore,
    pub summary: PanelSummary,
    pub pairs: Vec<PairRecord>,
}

/// Raw element-wise estimate over all pairs.
///
/// Pairs that cannot be estimated get entry 0 and a non-`Ok` status. Fails
/// only if a diagonal entry cannot be estimated.
pub fn estimate_matrix(panel: &AsyncPanel, config: &EstimatorConfig) -> Result<MatrixEstimate> {
    config.validate()?;
    let summary = panel.summarize();
    let window = ResolvedWindow::resolve(config.window, &summary)?;
    let outcomes = run_pairs(panel, window, |z| z);
    check_diagonal(&outcomes)?;
    let p = panel.p();
    let mut raw = CovMatrix::zeros(p);
    let mut zeta = ZetaStore::new(p);
    let mut pairs = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (estimate, status) = match o.result {
            Ok((est, z)) => {
                zeta.insert(o.i, o.j, z);
                (est, PairStatus::Ok)
            }
            Err(status) => (0.0, status),
        };
        raw.set_sym(o.i, o.j, estimate);
        pairs.push(PairRecord {
            i: o.i,
            j: o.j,
            n_pair: o.n_pair,
            estimate,
            status,
            longrun: None,
            cutoff: None,
            kept: true,
            universal_fallback: false,
        });
    }
    Ok(MatrixEstimate {
        raw,
        zeta,
        summary,
        pairs,
    })
}

/// Raw and thresholded estimates with per-pair diagnostics.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub raw: CovMatrix,
    pub thresholded: CovMatrix,
    pub summary: PanelSummary,
    pub pairs: Vec<PairRecord>,
    /// `n_*` used by the universal rule (and by adaptive fallbacks).
    pub n_star_used: usize,
    /// Time window actually used, when the window is time-based.
    pub xi_used: Option<f64>,
    pub config: EstimatorConfig,
}

impl Estimate {
    pub fn meta(&self, thresholded: bool) -> MatrixMeta {
        MatrixMeta {
            threshold_rule: if thresholded {
                self.config.threshold.describe()
            } else {
                "none".into()
            },
            window_rule: self.config.window.describe(),
            n_star: self.n_star_used,
            diagonal_thresholded: thresholded
                && !self.config.diagonal_exempt
                && self.config.threshold != ThresholdRule::None,
        }
    }
}

/// Full pipeline: localized estimation followed by the configured thresholding.
///
/// For adaptive thresholding each pair's ζ series is reduced to its long-run
/// variance inside the pair task and then dropped, so memory stays at
/// `O(p² + max n_{i,j})` rather than holding every series.
pub fn estimate(panel: &AsyncPanel, config: &EstimatorConfig) -> Result<Estimate> {
    config.validate()?;
    let summary = panel.summarize();
    let window = ResolvedWindow::resolve(config.window, &summary)?;
    let adaptive = matches!(config.threshold, ThresholdRule::Adaptive { .. });
    let kernel = config.kernel;
    let clamp = config.clamp_negative_theta;
    let outcomes = run_pairs(panel, window, |z| {
        adaptive.then(|| longrun_stats(&z.values, kernel, clamp))
    });
    check_diagonal(&outcomes)?;

    let p = panel.p();
    let mut raw = CovMatrix::zeros(p);
    let mut stats = Vec::with_capacity(outcomes.len());
    let mut pairs = Vec::with_capacity(outcomes.len());
    let mut min_estimable = usize::MAX;
    for o in &outcomes {
        let (estimate, status, lr) = match &o.result {
            Ok((est, lr)) => {
                min_estimable = min_estimable.min(o.n_pair);
                (*est, PairStatus::Ok, *lr)
            }
            Err(status) => (0.0, *status, None),
        };
        raw.set_sym(o.i, o.j, estimate);
        stats.push(lr.map(|s| (o.n_pair, s)));
        pairs.push(PairRecord {
            i: o.i,
            j: o.j,
            n_pair: o.n_pair,
            estimate,
            status,
            longrun: lr,
            cutoff: None,
            kept: true,
            universal_fallback: false,
        });
    }
    let n_star_used = if summary.n_star >= 2 {
        summary.n_star
    } else {
        min_estimable
    };

    let thresholded = match config.threshold {
        ThresholdRule::None => raw.clone(),
        ThresholdRule::Universal { beta } => {
            let cutoff = universal_cutoff(beta, n_star_used, p);
            let out = threshold_universal(&raw, beta, n_star_used, config.diagonal_exempt);
            for rec in pairs.iter_mut() {
                rec.cutoff = Some(cutoff);
                rec.kept = (rec.i == rec.j && config.diagonal_exempt) || rec.estimate.abs() >= cutoff;
            }
            out
        }
        ThresholdRule::Adaptive { fallback_beta } => {
            // Degenerate pairs carry no ζ series and use the universal fallback;
            // their entry is already zero.
            let (out, decisions) = threshold::apply_adaptive(
                &raw,
                &stats,
                config.diagonal_exempt,
                fallback_beta,
                n_star_used,
            );
            for (rec, d) in pairs.iter_mut().zip(decisions) {
                rec.cutoff = Some(d.cutoff);
                rec.kept = d.kept;
                rec.universal_fallback = d.fallback;
            }
            out
        }
    };

    Ok(Estimate {
        raw,
        thresholded,
        summary,
        pairs,
        n_star_used,
        xi_used: window.xi(),
        config: *config,
    })
}

/// Header of the pair-diagnostics CSV.
pub const PAIR_CSV_HEADER: [&str; 14] = [
    "i",
    "j",
    "asset_i",
    "asset_j",
    "n_pair",
    "estimate",
    "ar1",
    "ar1_degenerate",
    "bandwidth",
    "theta",
    "cutoff",
    "kept",
    "status",
    "flags",
];

pub fn write_pair_csv<W: Write>(pairs: &[PairRecord], assets: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PAIR_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in pairs {
        let mut flags = Vec::new();
        if r.universal_fallback {
            flags.push("universal_fallback");
        }
        if r.longrun.is_some_and(|s| s.ar1.degenerate) {
            flags.push("ar1_degenerate");
        }
        if r.longrun.is_some_and(|s| s.ar1.raw != s.ar1.coeff) {
            flags.push("ar1_clamped");
        }
        if r.status != PairStatus::Ok {
            flags.push("unestimable");
        }
        w.write_record([
            r.i.to_string(),
            r.j.to_string(),
            assets[r.i].clone(),
            assets[r.j].clone(),
            r.n_pair.to_string(),
            r.estimate.to_string(),
            opt(r.longrun.map(|s| s.ar1.coeff)),
            r.longrun.map(|s| s.ar1.degenerate.to_string()).unwrap_or_default(),
            opt(r.longrun.map(|s| s.bandwidth)),
            opt(r.longrun.map(|s| s.theta)),
            opt(r.cutoff),
            r.kept.to_string(),
            r.status.as_str().to_string(),
            flags.join("|"),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
