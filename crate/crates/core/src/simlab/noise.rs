//! Noise covariance models and Gaussian noise draws.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, SymmetricFactor};
use crate::matrix::CovMatrix;

use super::rng::{stream, Purpose};

/// Correlation structure `R` of the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum NoiseVariant {
    /// Banded: 1 on the diagonal, 0.6 at lag 1, 0.3 at lag 2.
    M1,
    /// Sparse random: `R̃ + (|λ_min(R̃)| + 0.05) I` with `r̃_ij = w_ij b_ij`,
    /// `w ~ U(0.4, 0.8)`, `b ~ Bernoulli(0.04)`.
    M2 {
        /// Seed of the random structure; derived from the experiment seed when absent.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Dense Toeplitz `0.6^{|i−j|}`.
    M3,
}

fn default_scale() -> f64 {
    0.005
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub variant: NoiseVariant,
    /// Noise standard-deviation multiplier; `Σ_u = scale² R`.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

impl NoiseModel {
    pub fn new(variant: NoiseVariant) -> Self {
        Self {
            variant,
            scale: default_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self.variant {
            NoiseVariant::M1 => "M1",
            NoiseVariant::M2 { .. } => "M2",
            NoiseVariant::M3 => "M3",
        }
    }
}

/// Off-diagonal entries of M2 are drawn for `i < j` only; the diagonal of
/// `R̃` is zero and the eigenvalue shift alone sets the diagonal of `R`.
const M2_FLOOR: f64 = 0.05;
const M2_EDGE_PROB: f64 = 0.04;

/// The correlation-scale matrix `R` of a noise model.
///
/// `fallback_seed` seeds M2 when the model carries no seed of its own.
pub fn noise_correlation(variant: NoiseVariant, p: usize, fallback_seed: u64) -> CovMatrix {
    let mut r = CovMatrix::zeros(p);
    match variant {
        NoiseVariant::M1 => {
            for i in 0..p {
                r.set_sym(i, i, 1.0);
                if i + 1 < p {
                    r.set_sym(i, i + 1, 0.6);
                }
                if i + 2 < p {
                    r.set_sym(i, i + 2, 0.3);
                }
            }
        }
        NoiseVariant::M3 => {
            for i in 0..p {
                for j in 0..=i {
                    r.set_sym(i, j, 0.6_f64.powi((i - j) as i32));
                }
            }
        }
        NoiseVariant::M2 { seed } => {
            let mut rng = stream(seed.unwrap_or(fallback_seed), Purpose::NoiseModel, 0, 0);
            let weight = Uniform::new(0.4, 0.8).expect("valid bounds");
            let edge = Bernoulli::new(M2_EDGE_PROB).expect("valid probability");
            for i in 0..p {
                for j in (i + 1)..p {
                    let w: f64 = weight.sample(&mut rng);
                    let b = edge.sample(&mut rng);
                    if b {
                        r.set_sym(i, j, w);
                    }
                }
            }
            let lambda_min = symmetric_eigenvalues(&r).first().copied().unwrap_or(0.0);
            let shift = lambda_min.abs() + M2_FLOOR;
            for i in 0..p {
                r.set_sym(i, i, shift);
            }
        }
    }
    r
}

/// `Σ_u = scale² · R`.
pub fn noise_cov(model: &NoiseModel, p: usize, fallback_seed: u64) -> CovMatrix {
    noise_correlation(model.variant, p, fallback_seed).scaled(model.scale * model.scale)
}

/// `count` i.i.d. noise vectors, stored tick-major (`count × p`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    pub p: usize,
    pub count: usize,
    pub data: Vec<f64>,
}

impl NoiseDraws {
    pub fn zeros(p: usize, count: usize) -> Self {
        Self {
            p,
            count,
            data: vec![0.0; p * count],
        }
    }

    #[inline]
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.data[k * self.p..(k + 1) * self.p]
    }
}

/// Draws from `N(0, Σ)` through the symmetric factor of `Σ`.
pub fn sample_noise<R: Rng>(factor: &SymmetricFactor, count: usize, rng: &mut R) -> NoiseDraws {
    let p = factor.dim();
    let mut out = NoiseDraws::zeros(p, count);
    let mut z = vec![0.0; p];
    for k in 0..count {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        factor.apply(&z, &mut out.data[k * p..(k + 1) * p]);
    }
    out
}

/// Convenience wrapper that factors `cov` first.
pub fn sample_noise_from_cov<R: Rng>(cov: &CovMatrix, count: usize, rng: &mut R) -> Result<NoiseDraws> {
    Ok(sample_noise(&SymmetricFactor::new(cov)?, count, rng))
}
