//! Localized pairwise estimators of one noise covariance entry.
//!
//! For each index `k` on the common grid of assets `i` and `j`, differences
//! against nearby observations cancel most of the latent price movement and
//! leave (twice) the noise covariance:
//!
//! ```text
//! ζ_k = 1/(2 N_k) · Σ_{ℓ ∈ S_k} (Y_i,ℓ − Y_i,k)(Y_j,ℓ − Y_j,k)
//! σ̂   = mean_k ζ_k
//! ```
//!
//! `S_k` is either a time window of radius `ξ` or an index window of half-width `K`.
//! Both variants accumulate `ℓ` in ascending order and divide once per `k`, so
//! they produce bit-identical results whenever their windows coincide.

use crate::error::{Error, Result};
use crate::panel::{k_window, PairGrid};

/// Per-index localized products for one pair; their mean is the entry estimate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZetaSeries {
    pub values: Vec<f64>,
}

impl ZetaSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sequential-sum mean. This is the entry estimate returned by the local estimators.
    pub fn mean(&self) -> f64 {
        let mut sum = 0.0;
        for v in &self.values {
            sum += v;
        }
        sum / self.values.len() as f64
    }
}

#[inline]
fn zeta_at(grid: &PairGrid, k: usize, lo: usize, hi: usize) -> f64 {
    let (yi, yj) = (&grid.values_i, &grid.values_j);
    let (ai, aj) = (yi[k], yj[k]);
    let mut sum = 0.0;
    for l in lo..hi {
        if l != k {
            sum += (yi[l] - ai) * (yj[l] - aj);
        }
    }
    sum / (2.0 * (hi - lo - 1) as f64)
}

/// Time-window estimate with radius `xi` (years).
///
/// Indices whose window holds no other observation are left out of the ζ
/// series, so the estimate averages over the indices that contribute. Fails
/// when no index has a neighbor.
pub fn local_cov_xi(grid: &PairGrid, xi: f64, tick_duration: f64) -> Result<(f64, ZetaSeries)> {
    if !(xi > 0.0) {
        return Err(Error::InvalidConfig(format!("xi must be positive, got {xi}")));
    }
    if grid.len() < 2 {
        return Err(unestimable(grid, "fewer than two common observations"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (lo, hi) = grid.xi_window(k, xi, tick_duration);
        if hi - lo > 1 {
            values.push(zeta_at(grid, k, lo, hi));
        }
    }
    if values.is_empty() {
        return Err(unestimable(grid, "no observation has a neighbor within the time window"));
    }
    let zeta = ZetaSeries { values };
    Ok((zeta.mean(), zeta))
}

/// Index-window estimate: `K` neighbors on each side, clipped at the ends.
pub fn local_cov_k(grid: &PairGrid, half_width: usize) -> Result<(f64, ZetaSeries)> {
    if half_width == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let n = grid.len();
    if n < 2 {
        return Err(unestimable(grid, "fewer than two common observations"));
    }
    let values = (0..n)
        .map(|k| {
            let (lo, hi) = k_window(n, k, half_width);
            zeta_at(grid, k, lo, hi)
        })
        .collect();
    let zeta = ZetaSeries { values };
    Ok((zeta.mean(), zeta))
}

fn unestimable(grid: &PairGrid, reason: &str) -> Error {
    Error::Unestimable {
        i: grid.asset_i,
        j: grid.asset_j,
        reason: reason.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(ticks: &[u64], yi: &[f64], yj: &[f64]) -> PairGrid {
        PairGrid::new(ticks.to_vec(), yi.to_vec(), yj.to_vec()).unwrap()
    }

    #[test]
    fn hand_enumerated_three_ticks() {
        let g = grid(&[0, 1, 2], &[0.0, 1.0, 0.0], &[0.0, 2.0, 0.0]);
        let (est, zeta) = local_cov_xi(&g, 1.0, 1.0).unwrap();
        assert_eq!(zeta.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(est, 1.0);
        let (est, zeta) = local_cov_k(&g, 1).unwrap();
        assert_eq!(zeta.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(est, 1.0);
    }

    #[test]
    fn constant_series_gives_zero() {
        let g = grid(&[0, 3, 4, 9], &[2.0; 4], &[0.1, -0.4, 0.9, 0.3]);
        assert_eq!(local_cov_xi(&g, 10.0, 1.0).unwrap().0, 0.0);
        let (est, zeta) = local_cov_k(&g, 2).unwrap();
        assert_eq!(est, 0.0);
        assert!(zeta.values.iter().all(|z| *z == 0.0));
    }

    #[test]
    fn k_window_saturates() {
        let g = grid(&[1, 2, 4, 8, 9], &[0.3, -0.1, 0.5, 0.2, 0.0], &[1.0, 0.4, -0.2, 0.8, 0.1]);
        let n = g.len();
        assert_eq!(local_cov_k(&g, n - 1).unwrap(), local_cov_k(&g, n + 7).unwrap());
    }

    #[test]
    fn isolated_points_are_skipped() {
        // Ticks 0,1 form a cluster; 20 has no neighbor within xi = 2.
        let g = grid(&[0, 1, 20], &[0.0, 1.0, 5.0], &[0.0, 1.0, 5.0]);
        let (est, zeta) = local_cov_xi(&g, 2.0, 1.0).unwrap();
        assert_eq!(zeta.len(), 2);
        assert_eq!(est, 0.5);
        let far = grid(&[0, 10, 20], &[0.0, 1.0, 5.0], &[0.0, 1.0, 5.0]);
        assert!(matches!(local_cov_xi(&far, 2.0, 1.0), Err(Error::Unestimable { .. })));
    }

    #[test]
    fn too_short_grid() {
        let g = grid(&[4], &[1.0], &[1.0]);
        assert!(local_cov_k(&g, 1).is_err());
        assert!(local_cov_xi(&g, 1.0, 1.0).is_err());
    }
}
