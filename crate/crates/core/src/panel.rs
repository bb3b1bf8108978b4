//! Asynchronous observation panels.
//!
//! Observation times live on an integer tick lattice: asset `i` is observed at
//! a strictly increasing set of tick indices (its grid), and a single
//! `tick_duration` (in years) converts tick gaps into calendar time. Grid
//! intersections are therefore exact set operations.
//!
//! The tick CSV format is `tick,asset,value` with a header row. Asset ids are
//! arbitrary strings and are mapped to dense indices in lexicographic order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Observations of one asset: tick indices and the value seen at each.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    ticks: Vec<u64>,
    values: Vec<f64>,
}

impl Series {
    pub fn new(ticks: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        if ticks.len() != values.len() {
            return Err(Error::InvalidPanel(format!(
                "{} ticks but {} values",
                ticks.len(),
                values.len()
            )));
        }
        Ok(Self { ticks, values })
    }

    pub fn ticks(&self) -> &[u64] {
        &self.ticks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }
}

/// Per-asset noisy observations on a common tick lattice. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncPanel {
    tick_duration: f64,
    assets: Vec<String>,
    series: Vec<Series>,
}

impl AsyncPanel {
    /// Validates and builds a panel.
    ///
    /// Every asset needs at least two observations with strictly increasing ticks.
    pub fn new(assets: Vec<String>, series: Vec<Series>, tick_duration: f64) -> Result<Self> {
        if !(tick_duration > 0.0 && tick_duration.is_finite()) {
            return Err(Error::InvalidPanel(format!(
                "tick_duration must be positive and finite, got {tick_duration}"
            )));
        }
        if assets.len() != series.len() {
            return Err(Error::InvalidPanel(format!(
                "{} asset names for {} series",
                assets.len(),
                series.len()
            )));
        }
        if series.is_empty() {
            return Err(Error::InvalidPanel("panel has no assets".into()));
        }
        for (name, s) in assets.iter().zip(&series) {
            if s.len() < 2 {
                return Err(Error::InvalidPanel(format!(
                    "asset {name:?} has {} observation(s); at least 2 are required",
                    s.len()
                )));
            }
            if let Some(w) = s.ticks.windows(2).find(|w| w[1] <= w[0]) {
                return Err(if w[1] == w[0] {
                    Error::DuplicateObservation {
                        asset: name.clone(),
                        tick: w[0],
                    }
                } else {
                    Error::NonMonotoneTicks {
                        asset: name.clone(),
                        tick: w[1],
                    }
                });
            }
            if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidPanel(format!(
                    "asset {name:?} has a non-finite value {v}"
                )));
            }
        }
        Ok(Self {
            tick_duration,
            assets,
            series,
        })
    }

    /// Panel with default asset names `A0, A1, ...`.
    pub fn from_series(series: Vec<Series>, tick_duration: f64) -> Result<Self> {
        let assets = default_asset_names(series.len());
        Self::new(assets, series, tick_duration)
    }

    pub fn p(&self) -> usize {
        self.series.len()
    }

    pub fn tick_duration(&self) -> f64 {
        self.tick_duration
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn series(&self, i: usize) -> &Series {
        &self.series[i]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.p() {
            return Err(Error::AssetOutOfRange {
                index: i,
                p: self.p(),
            });
        }
        Ok(())
    }

    /// Number of common ticks of assets `i` and `j`, without materializing them.
    pub fn pair_count(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.series[i].ticks, &self.series[j].ticks);
        if i == j {
            return a.len();
        }
        let (mut x, mut y, mut count) = (0, 0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        count
    }

    /// Common grid of assets `i` and `j` with aligned values.
    ///
    /// Fails with [`Error::EmptyGrid`] when the two grids are disjoint.
    pub fn pair_intersection(&self, i: usize, j: usize) -> Result<PairGrid> {
        self.check_index(i)?;
        self.check_index(j)?;
        let (si, sj) = (&self.series[i], &self.series[j]);
        if i == j {
            return Ok(PairGrid {
                asset_i: i,
                asset_j: j,
                ticks: si.ticks.clone(),
                values_i: si.values.clone(),
                values_j: si.values.clone(),
            });
        }
        let cap = si.len().min(sj.len());
        let mut ticks = Vec::with_capacity(cap);
        let mut values_i = Vec::with_capacity(cap);
        let mut values_j = Vec::with_capacity(cap);
        let (mut x, mut y) = (0, 0);
        while x < si.len() && y < sj.len() {
            match si.ticks[x].cmp(&sj.ticks[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    ticks.push(si.ticks[x]);
                    values_i.push(si.values[x]);
                    values_j.push(sj.values[y]);
                    x += 1;
                    y += 1;
                }
            }
        }
        if ticks.is_empty() {
            return Err(Error::EmptyGrid { i, j });
        }
        Ok(PairGrid {
            asset_i: i,
            asset_j: j,
            ticks,
            values_i,
            values_j,
        })
    }

    /// Sample-size summary over all pairs.
    pub fn summarize(&self) -> PanelSummary {
        let p = self.p();
        let mut all: Vec<u64> = self.series.iter().flat_map(|s| s.ticks.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        let mut n_star = usize::MAX;
        let mut n_pair_max = 0;
        let mut empty_pairs = Vec::new();
        for i in 0..p {
            for j in i..p {
                let c = self.pair_count(i, j);
                n_star = n_star.min(c);
                n_pair_max = n_pair_max.max(c);
                if c == 0 {
                    empty_pairs.push((i, j));
                }
            }
        }
        PanelSummary {
            n: all.len(),
            n_star,
            n_pair_max,
            empty_pairs,
        }
    }

    /// Reads a tick CSV file.
    pub fn load_csv(path: impl AsRef<Path>, tick_duration: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), tick_duration)
    }

    /// Parses the `tick,asset,value` format.
    ///
    /// Rows may arrive in any order across assets but ticks must be strictly
    /// increasing within each asset.
    pub fn read_csv<R: Read>(reader: R, tick_duration: f64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        let expected = ["tick", "asset", "value"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `tick,asset,value`, found {:?}", headers.iter().collect::<Vec<_>>()),
            });
        }
        let mut by_asset: BTreeMap<String, (Vec<u64>, Vec<f64>)> = BTreeMap::new();
        let mut record = csv::StringRecord::new();
        loop {
            match r.read_record(&mut record) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(Error::Parse {
                        line,
                        message: e.to_string(),
                    });
                }
            }
            let line = record.position().map_or(0, |p| p.line());
            let tick: u64 = record[0].parse().map_err(|_| Error::Parse {
                line,
                message: format!("tick {:?} is not a nonnegative integer", &record[0]),
            })?;
            let asset = &record[1];
            if asset.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty asset id".into(),
                });
            }
            let value: f64 = record[2].parse().map_err(|_| Error::Parse {
                line,
                message: format!("value {:?} is not a number", &record[2]),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("value {value} is not finite"),
                });
            }
            let entry = by_asset.entry(asset.to_owned()).or_default();
            if let Some(&last) = entry.0.last() {
                if tick == last {
                    return Err(Error::DuplicateObservation {
                        asset: asset.to_owned(),
                        tick,
                    });
                }
                if tick < last {
                    // Distinguish a late duplicate from a genuine ordering error.
                    if entry.0.binary_search(&tick).is_ok() {
                        return Err(Error::DuplicateObservation {
                            asset: asset.to_owned(),
                            tick,
                        });
                    }
                    return Err(Error::NonMonotoneTicks {
                        asset: asset.to_owned(),
                        tick,
                    });
                }
            }
            entry.0.push(tick);
            entry.1.push(value);
        }
        let mut assets = Vec::with_capacity(by_asset.len());
        let mut series = Vec::with_capacity(by_asset.len());
        for (name, (ticks, values)) in by_asset {
            assets.push(name);
            series.push(Series { ticks, values });
        }
        Self::new(assets, series, tick_duration)
    }

    /// Writes the panel as tick CSV, grouped by asset in index order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tick", "asset", "value"])?;
        for (name, s) in self.assets.iter().zip(&self.series) {
            for (t, v) in s.ticks.iter().zip(&s.values) {
                w.write_record([t.to_string().as_str(), name.as_str(), v.to_string().as_str()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub(crate) fn default_asset_names(p: usize) -> Vec<String> {
    // Zero-padded so lexicographic order matches index order after a CSV round trip.
    let width = p.saturating_sub(1).to_string().len();
    (0..p).map(|i| format!("A{i:0width$}")).collect()
}

/// The common grid `G_i ∩ G_j` with both assets' values aligned on it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrid {
    pub asset_i: usize,
    pub asset_j: usize,
    pub ticks: Vec<u64>,
    pub values_i: Vec<f64>,
    pub values_j: Vec<f64>,
}

impl PairGrid {
    /// Builds a grid directly; used by tests and the FFI layer.
    pub fn new(ticks: Vec<u64>, values_i: Vec<f64>, values_j: Vec<f64>) -> Result<Self> {
        if ticks.len() != values_i.len() || ticks.len() != values_j.len() {
            return Err(Error::InvalidPanel("pair grid arrays differ in length".into()));
        }
        if ticks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPanel("pair grid ticks not strictly increasing".into()));
        }
        Ok(Self {
            asset_i: 0,
            asset_j: 1,
            ticks,
            values_i,
            values_j,
        })
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Indices `ℓ ≠ k` whose time lies within `xi` years of index `k`'s time.
    pub fn neighborhood_xi(&self, k: usize, xi: f64, tick_duration: f64) -> Vec<usize> {
        let (lo, hi) = self.xi_window(k, xi, tick_duration);
        (lo..hi).filter(|&l| l != k).collect()
    }

    /// Half-open index range `[lo, hi)` of all ticks within `xi` of index `k`
    /// (including `k` itself). Ticks are sorted, so the window is contiguous.
    pub(crate) fn xi_window(&self, k: usize, xi: f64, tick_duration: f64) -> (usize, usize) {
        let t = self.ticks[k];
        let within = |other: u64| (other.abs_diff(t) as f64) * tick_duration <= xi;
        let mut lo = k;
        while lo > 0 && within(self.ticks[lo - 1]) {
            lo -= 1;
        }
        let mut hi = k + 1;
        while hi < self.ticks.len() && within(self.ticks[hi]) {
            hi += 1;
        }
        (lo, hi)
    }

    /// Indices `ℓ` with `0 < |ℓ − k| ≤ K`, clipped to the grid.
    pub fn neighborhood_k(&self, k: usize, half_width: usize) -> Vec<usize> {
        let (lo, hi) = k_window(self.len(), k, half_width);
        (lo..hi).filter(|&l| l != k).collect()
    }
}

/// Half-open index range of the `K`-neighborhood of `k` (including `k`).
#[inline]
pub(crate) fn k_window(n: usize, k: usize, half_width: usize) -> (usize, usize) {
    (k.saturating_sub(half_width), (k + half_width + 1).min(n))
}

/// Sample sizes of a panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PanelSummary {
    /// Number of distinct observation ticks across all assets.
    pub n: usize,
    /// Smallest pairwise overlap `min n_{i,j}` (0 when some pair is disjoint).
    pub n_star: usize,
    /// Largest pairwise overlap.
    pub n_pair_max: usize,
    /// Pairs `(i, j)`, `i ≤ j`, with no common tick.
    pub empty_pairs: Vec<(usize, usize)>,
}

impl PanelSummary {
    pub fn has_empty_pairs(&self) -> bool {
        !self.empty_pairs.is_empty()
    }
}
