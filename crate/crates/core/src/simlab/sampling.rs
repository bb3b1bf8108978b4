//! Turning latent paths plus noise into observation panels.
//!
//! Noise is drawn once per lattice tick as a full `p`-vector; an asset
//! observed at tick `t` reads its own coordinate. Assets that share a tick
//! therefore see noise with the cross-sectional covariance `Σ_u`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{default_asset_names, AsyncPanel, Series};

use super::heston::LatentPaths;
use super::noise::NoiseDraws;

/// How per-asset observation times are drawn in the asynchronous scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalRule {
    /// Exponential inter-arrival times with mean `λ` ticks, rounded up to the
    /// next tick. Equivalently, a tick is observed when a rate-`1/λ` Poisson
    /// stream has at least one arrival in it, so each tick is kept with
    /// probability `1 − e^{−1/λ}` and `λ = 1` does not saturate.
    #[default]
    ExponentialCeil,
    /// Rounded-up exponential gaps with the rate chosen so the mean gap is
    /// exactly `λ` ticks; `λ = 1` observes every tick.
    Geometric,
    /// Each tick observed independently with probability `1/λ`. Same law as
    /// `Geometric`, drawn tick by tick.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Every asset observed at ticks `Δ, 2Δ, …, ⌊ticks/Δ⌋Δ`.
    Sync { delta: usize },
    /// Independent per-asset arrival streams with mean gap `λ` ticks.
    Async {
        lambda: f64,
        #[serde(default)]
        arrival: ArrivalRule,
    },
}

impl SamplingScheme {
    pub fn validate(&self, ticks: usize) -> Result<()> {
        match *self {
            SamplingScheme::Sync { delta } if delta == 0 || delta >= ticks => Err(Error::InvalidConfig(
                format!("delta must be in [1, {ticks}), got {delta}"),
            )),
            SamplingScheme::Async { lambda, .. } if !(lambda >= 1.0 && lambda.is_finite()) => Err(
                Error::InvalidConfig(format!("lambda must be at least 1, got {lambda}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SamplingScheme::Sync { delta } => format!("sync_delta={delta}"),
            SamplingScheme::Async { lambda, .. } => format!("async_lambda={lambda}"),
        }
    }
}

fn check_shapes(paths: &LatentPaths, noise: &NoiseDraws) -> Result<()> {
    if noise.p != paths.p {
        return Err(Error::DimensionMismatch {
            left: noise.p,
            right: paths.p,
        });
    }
    if noise.count < paths.ticks {
        return Err(Error::DimensionMismatch {
            left: noise.count,
            right: paths.ticks,
        });
    }
    Ok(())
}

/// Observes every asset at ticks `kΔ`, `k = 1..⌊ticks/Δ⌋`: `Y = X + U`.
pub fn sample_sync(
    paths: &LatentPaths,
    noise: &NoiseDraws,
    delta: usize,
    tick_duration: f64,
) -> Result<AsyncPanel> {
    check_shapes(paths, noise)?;
    SamplingScheme::Sync { delta }.validate(paths.ticks)?;
    let ticks: Vec<u64> = (1..=paths.ticks / delta).map(|k| (k * delta) as u64).collect();
    let series = (0..paths.p)
        .map(|i| {
            let values = ticks
                .iter()
                .map(|&t| {
                    let t = t as usize;
                    paths.x_at(i, t) + noise.vector(t - 1)[i]
                })
                .collect();
            Series::new(ticks.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    AsyncPanel::new(default_asset_names(paths.p), series, tick_duration)
}

/// Arrival ticks in `1..=ticks` for one asset.
fn arrivals<R: Rng>(ticks: usize, lambda: f64, rule: ArrivalRule, rng: &mut R) -> Vec<u64> {
    let mut out = Vec::with_capacity((ticks as f64 / lambda) as usize + 16);
    let ceil_gaps = |rate: f64, rng: &mut R, out: &mut Vec<u64>| {
        let exp = Exp::new(rate).expect("rate is positive");
        let mut t = 0u64;
        loop {
            t += (exp.sample(rng).ceil() as u64).max(1);
            if t > ticks as u64 {
                break;
            }
            out.push(t);
        }
    };
    match rule {
        ArrivalRule::ExponentialCeil => ceil_gaps(1.0 / lambda, rng, &mut out),
        ArrivalRule::Geometric | ArrivalRule::Bernoulli if lambda <= 1.0 => {
            out.extend(1..=ticks as u64);
        }
        // ⌈E⌉ with E ~ Exp(r) is geometric with mean 1/(1 − e^{−r}); solve for mean λ.
        ArrivalRule::Geometric => ceil_gaps(-(1.0 - 1.0 / lambda).ln(), rng, &mut out),
        ArrivalRule::Bernoulli => {
            let prob = 1.0 / lambda;
            for t in 1..=ticks as u64 {
                if rng.random::<f64>() < prob {
                    out.push(t);
                }
            }
        }
    }
    out
}

/// Probability that a given tick is observed under `rule`.
pub fn tick_probability(lambda: f64, rule: ArrivalRule) -> f64 {
    match rule {
        ArrivalRule::ExponentialCeil => 1.0 - (-1.0 / lambda).exp(),
        ArrivalRule::Geometric | ArrivalRule::Bernoulli => 1.0 / lambda,
    }
}

/// Redraws an asset's arrival stream at most this many times when it yields fewer than 2 observations.
pub const MAX_ARRIVAL_RETRIES: usize = 100;

/// Independent per-asset arrival streams on the lattice, `Y = X + U` at each arrival.
pub fn sample_async<R: Rng>(
    paths: &LatentPaths,
    noise: &NoiseDraws,
    lambda: f64,
    rule: ArrivalRule,
    tick_duration: f64,
    rng: &mut R,
) -> Result<AsyncPanel> {
    check_shapes(paths, noise)?;
    SamplingScheme::Async { lambda, arrival: rule }.validate(paths.ticks)?;
    let mut series = Vec::with_capacity(paths.p);
    for i in 0..paths.p {
        let mut grid = arrivals(paths.ticks, lambda, rule, rng);
        let mut attempts = 0;
        while grid.len() < 2 {
            attempts += 1;
            if attempts > MAX_ARRIVAL_RETRIES {
                return Err(Error::Simulation(format!(
                    "asset {i} drew fewer than 2 observations in {MAX_ARRIVAL_RETRIES} attempts"
                )));
            }
            grid = arrivals(paths.ticks, lambda, rule, rng);
        }
        let values = grid
            .iter()
            .map(|&t| {
                let t = t as usize;
                paths.x_at(i, t) + noise.vector(t - 1)[i]
            })
            .collect();
        series.push(Series::new(grid, values)?);
    }
    AsyncPanel::new(default_asset_names(paths.p), series, tick_duration)
}
