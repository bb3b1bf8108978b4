//! Correlated Heston latent paths on the tick lattice.
//!
//! ```text
//! dX_i  = σ_i dB_i
//! dσ²_i = κ (σ̄² − σ²_i) dt + s σ_i dW_i
//! E[dB_i dB_j] = ρ_ij dt,   E[dB_i dW_i] = ς dt
//! ```
//!
//! Discretized with full-truncation Euler: the variance state may dip below
//! zero, but only its positive part enters the drift and both diffusions.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricFactor;
use crate::matrix::CovMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HestonConfig {
    pub p: usize,
    pub kappa: f64,
    /// Vol-of-vol.
    pub s: f64,
    pub sigma_bar_sq: f64,
    /// Correlation between each asset's price and variance drivers.
    pub varsigma: f64,
    /// Decay `a` of the lower-triangular correlation builder.
    pub corr_decay: f64,
    pub ticks_per_day: usize,
    /// Length of the simulated day in years.
    pub day_length: f64,
    /// Fixed starting variance; drawn from the Gamma law when absent.
    pub initial_variance: Option<f64>,
}

impl Default for HestonConfig {
    fn default() -> Self {
        Self {
            p: 50,
            kappa: 4.0,
            s: 0.3,
            sigma_bar_sq: 0.09,
            varsigma: -0.3,
            corr_decay: -0.8,
            ticks_per_day: 23_400,
            day_length: 1.0 / 252.0,
            initial_variance: None,
        }
    }
}

impl HestonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if !(self.kappa > 0.0 && self.s > 0.0 && self.sigma_bar_sq > 0.0) {
            return bad(format!(
                "kappa, s and sigma_bar_sq must be positive (got {}, {}, {})",
                self.kappa, self.s, self.sigma_bar_sq
            ));
        }
        if !(self.varsigma.abs() < 1.0 && self.corr_decay.abs() < 1.0) {
            return bad(format!(
                "varsigma and corr_decay must lie in (-1, 1) (got {}, {})",
                self.varsigma, self.corr_decay
            ));
        }
        if self.ticks_per_day < 2 {
            return bad("ticks_per_day must be at least 2".into());
        }
        if !(self.day_length > 0.0 && self.day_length.is_finite()) {
            return bad(format!("day_length must be positive (got {})", self.day_length));
        }
        if let Some(v) = self.initial_variance {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("initial_variance must be nonnegative (got {v})"));
            }
        }
        Ok(())
    }

    /// Time step in years.
    pub fn dt(&self) -> f64 {
        self.day_length / self.ticks_per_day as f64
    }

    /// Shape and scale of the initial-variance Gamma law: `(κσ̄²/s², s²/(2κ))`.
    pub fn initial_gamma(&self) -> (f64, f64) {
        (
            self.kappa * self.sigma_bar_sq / (self.s * self.s),
            self.s * self.s / (2.0 * self.kappa),
        )
    }
}

/// `ρ = D^{-1/2} A Aᵀ D^{-1/2}` with `A` lower triangular, `a_ij = a^{|i−j|}`
/// for `i ≥ j`, and `D` the diagonal of `A Aᵀ`.
pub fn build_brownian_corr(p: usize, a: f64) -> CovMatrix {
    let lower = |i: usize, j: usize| if i >= j { a.powi((i - j) as i32) } else { 0.0 };
    let mut gram = CovMatrix::zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|k| lower(i, k) * lower(j, k)).sum();
            gram.set_sym(i, j, v);
        }
    }
    let d: Vec<f64> = gram.diagonal().iter().map(|v| v.sqrt()).collect();
    let mut rho = CovMatrix::zeros(p);
    for i in 0..p {
        for j in 0..i {
            rho.set_sym(i, j, gram.get(i, j) / (d[i] * d[j]));
        }
        rho.set_sym(i, i, 1.0);
    }
    rho
}

/// Simulated latent log-prices and the (truncated) variance used at each tick.
///
/// Tick `t` (1-based, `1..=ticks`) of asset `i` lives at index `i·ticks + t − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPaths {
    pub p: usize,
    pub ticks: usize,
    pub x: Vec<f64>,
    pub variance: Vec<f64>,
}

impl LatentPaths {
    /// All-zero paths, for pure-noise experiments.
    pub fn zeros(p: usize, ticks: usize) -> Self {
        Self {
            p,
            ticks,
            x: vec![0.0; p * ticks],
            variance: vec![0.0; p * ticks],
        }
    }

    #[inline]
    pub fn x_at(&self, asset: usize, tick: usize) -> f64 {
        self.x[asset * self.ticks + tick - 1]
    }

    pub fn asset_path(&self, asset: usize) -> &[f64] {
        &self.x[asset * self.ticks..(asset + 1) * self.ticks]
    }

    pub fn asset_variance(&self, asset: usize) -> &[f64] {
        &self.variance[asset * self.ticks..(asset + 1) * self.ticks]
    }
}

/// Simulates one day of correlated Heston paths starting from `X = 0`.
///
/// `rho_factor` is a symmetric factor of the Brownian correlation matrix
/// (see [`build_brownian_corr`]).
pub fn heston_paths<R: Rng>(
    config: &HestonConfig,
    rho_factor: &SymmetricFactor,
    rng: &mut R,
) -> Result<LatentPaths> {
    config.validate()?;
    let p = config.p;
    if rho_factor.dim() != p {
        return Err(Error::DimensionMismatch {
            left: rho_factor.dim(),
            right: p,
        });
    }
    let ticks = config.ticks_per_day;
    let dt = config.dt();
    let sqrt_dt = dt.sqrt();
    let ortho = (1.0 - config.varsigma * config.varsigma).sqrt();

    let mut v: Vec<f64> = match config.initial_variance {
        Some(v0) => vec![v0; p],
        None => {
            let (shape, scale) = config.initial_gamma();
            let gamma = Gamma::new(shape, scale)
                .map_err(|e| Error::InvalidConfig(format!("initial variance law: {e}")))?;
            (0..p).map(|_| gamma.sample(rng)).collect()
        }
    };
    let mut x = vec![0.0; p];
    let mut z = vec![0.0; p];
    let mut db = vec![0.0; p];
    let mut out = LatentPaths::zeros(p, ticks);

    for t in 0..ticks {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        rho_factor.apply(&z, &mut db);
        for i in 0..p {
            let vp = v[i].max(0.0);
            let sd = vp.sqrt();
            let db_i = db[i] * sqrt_dt;
            let z2: f64 = rng.sample(StandardNormal);
            let dw = config.varsigma * db_i + ortho * sqrt_dt * z2;
            x[i] += sd * db_i;
            v[i] += config.kappa * (config.sigma_bar_sq - vp) * dt + config.s * sd * dw;
            out.x[i * ticks + t] = x[i];
            out.variance[i * ticks + t] = v[i].max(0.0);
        }
    }
    if out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulation("latent path became non-finite".into()));
    }
    Ok(out)
}
