//! Small dense linear-algebra helpers.

use crate::error::{Error, Result};
use crate::matrix::CovMatrix;

/// Relative pivot tolerance for semidefinite factorization.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Lower-triangular factor `L` with `L Lᵀ = Σ` for a positive semidefinite `Σ`.
///
/// Columns whose pivot falls below [`PSD_TOLERANCE`] (relative to the largest
/// diagonal entry) are zeroed, so rank-deficient and all-zero inputs factor
/// cleanly. A pivot below `-PSD_TOLERANCE` means the input is indefinite.
#[derive(Debug, Clone)]
pub struct SymmetricFactor {
    p: usize,
    lower: Vec<f64>,
}

impl SymmetricFactor {
    pub fn new(cov: &CovMatrix) -> Result<Self> {
        let p = cov.dim();
        let scale = cov
            .diagonal()
            .iter()
            .fold(0.0_f64, |acc, d| acc.max(d.abs()));
        let tol = PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE);
        let mut lower = vec![0.0; p * p];
        for j in 0..p {
            let mut pivot = cov.get(j, j);
            for k in 0..j {
                pivot -= lower[j * p + k] * lower[j * p + k];
            }
            if pivot < -tol {
                return Err(Error::NotPositiveSemidefinite { pivot: j, value: pivot });
            }
            if pivot <= tol {
                // Column is (numerically) dependent on earlier ones.
                for i in (j + 1)..p {
                    let mut off = cov.get(i, j);
                    for k in 0..j {
                        off -= lower[i * p + k] * lower[j * p + k];
                    }
                    if off.abs() > (tol * scale.max(f64::MIN_POSITIVE)).sqrt() {
                        return Err(Error::NotPositiveSemidefinite { pivot: j, value: pivot });
                    }
                }
                continue;
            }
            let d = pivot.sqrt();
            lower[j * p + j] = d;
            for i in (j + 1)..p {
                let mut off = cov.get(i, j);
                for k in 0..j {
                    off -= lower[i * p + k] * lower[j * p + k];
                }
                lower[i * p + j] = off / d;
            }
        }
        Ok(Self { p, lower })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.p + j]
    }

    /// Computes `out = L z`.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let p = self.p;
        for i in 0..p {
            let row = &self.lower[i * p..i * p + i + 1];
            out[i] = row.iter().zip(&z[..=i]).map(|(l, x)| l * x).sum();
        }
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &CovMatrix) -> Vec<f64> {
    let mut values: Vec<f64> = m
        .to_nalgebra()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values
}
