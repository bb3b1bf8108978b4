//! Entry-wise thresholding of a raw estimate.

use serde::Serialize;

use super::longrun::{andrews_bandwidth, ar1_coeff, longrun_variance, Ar1Fit, Kernel};
use super::ZetaStore;
use crate::matrix::CovMatrix;

/// `β · (log p / n_*)^{1/2}`.
pub fn universal_cutoff(beta: f64, n_star: usize, p: usize) -> f64 {
    beta * ((p as f64).ln() / n_star as f64).sqrt()
}

/// `2 · θ̂^{1/2} · n_{i,j}^{-1/2} · (log p)^{1/2}`. `p` is real-valued here so callers can pass `log p` exactly.
pub fn adaptive_cutoff(theta: f64, n_pair: usize, p: f64) -> f64 {
    2.0 * theta.sqrt() / (n_pair as f64).sqrt() * p.ln().sqrt()
}

/// Zeroes every entry whose magnitude falls below the universal cutoff.
///
/// The diagonal is thresholded too unless `diagonal_exempt` is set. With
/// `p = 1` the cutoff is zero and the input comes back unchanged.
pub fn threshold_universal(
    est: &CovMatrix,
    beta: f64,
    n_star: usize,
    diagonal_exempt: bool,
) -> CovMatrix {
    let p = est.dim();
    let cutoff = universal_cutoff(beta, n_star, p);
    let mut out = est.clone();
    for i in 0..p {
        for j in i..p {
            if i == j && diagonal_exempt {
                continue;
            }
            if est.get(i, j).abs() < cutoff {
                out.set_sym(i, j, 0.0);
            }
        }
    }
    out
}

/// Long-run variance diagnostics for one pair's ζ series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongRunStats {
    pub ar1: Ar1Fit,
    pub bandwidth: f64,
    pub theta: f64,
}

/// AR(1) fit, Andrews bandwidth and kernel long-run variance of a ζ series.
pub fn longrun_stats(zeta: &[f64], kernel: Kernel, clamp_negative: bool) -> LongRunStats {
    let ar1 = ar1_coeff(zeta);
    let bandwidth = andrews_bandwidth(zeta.len(), ar1.coeff);
    let theta = longrun_variance(zeta, kernel, bandwidth, clamp_negative);
    LongRunStats {
        ar1,
        bandwidth,
        theta,
    }
}

/// Per-entry outcome of adaptive thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptiveDecision {
    pub i: usize,
    pub j: usize,
    pub cutoff: f64,
    pub kept: bool,
    /// Set when no ζ series was available and the universal cutoff was used.
    pub fallback: bool,
    pub stats: Option<LongRunStats>,
}

/// Adaptive thresholding driven by each pair's ζ series.
///
/// Entries without a ζ series fall back to the universal rule with
/// `fallback_beta` and `n_star`, and are flagged in the returned decisions.
pub fn threshold_adaptive(
    est: &CovMatrix,
    zeta: &ZetaStore,
    kernel: Kernel,
    clamp_negative: bool,
    diagonal_exempt: bool,
    fallback_beta: f64,
    n_star: usize,
) -> (CovMatrix, Vec<AdaptiveDecision>) {
    let p = est.dim();
    let mut stats = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in i..p {
            let s = zeta
                .get(i, j)
                .map(|z| (z.len(), longrun_stats(&z.values, kernel, clamp_negative)));
            stats.push(s);
        }
    }
    apply_adaptive(est, &stats, diagonal_exempt, fallback_beta, n_star)
}

/// Applies adaptive cutoffs from precomputed `(n_{i,j}, stats)` in upper-triangular order.
pub(crate) fn apply_adaptive(
    est: &CovMatrix,
    stats: &[Option<(usize, LongRunStats)>],
    diagonal_exempt: bool,
    fallback_beta: f64,
    n_star: usize,
) -> (CovMatrix, Vec<AdaptiveDecision>) {
    let p = est.dim();
    let log_base = p as f64;
    let mut out = est.clone();
    let mut decisions = Vec::with_capacity(stats.len());
    let mut idx = 0;
    for i in 0..p {
        for j in i..p {
            let entry = stats[idx];
            idx += 1;
            let (cutoff, fallback) = match entry {
                Some((n_pair, s)) => (adaptive_cutoff(s.theta, n_pair, log_base), false),
                None => (universal_cutoff(fallback_beta, n_star.max(1), p), true),
            };
            let exempt = i == j && diagonal_exempt;
            let kept = exempt || est.get(i, j).abs() >= cutoff;
            if !kept {
                out.set_sym(i, j, 0.0);
            }
            decisions.push(AdaptiveDecision {
                i,
                j,
                cutoff,
                kept,
                fallback,
                stats: entry.map(|(_, s)| s),
            });
        }
    }
    (out, decisions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ZetaSeries;

    fn two_by_two() -> CovMatrix {
        CovMatrix::from_rows(&[vec![1.0, 0.1], vec![0.1, 1.0]]).unwrap()
    }

    #[test]
    fn universal_examples() {
        let est = two_by_two();
        assert_eq!(threshold_universal(&est, 0.0, 100, false), est);
        assert_eq!(threshold_universal(&est, 1e9, 100, false), CovMatrix::zeros(2));
        let kept = threshold_universal(&est, 1e9, 100, true);
        assert_eq!(kept, CovMatrix::from_diagonal(&[1.0, 1.0]));

        let cut = universal_cutoff(2.0, 100, 2);
        assert!((cut - 0.166_510_922_231_539_551).abs() < 1e-15);
        let out = threshold_universal(&est, 2.0, 100, false);
        assert_eq!(out, CovMatrix::from_diagonal(&[1.0, 1.0]));
    }

    #[test]
    fn adaptive_cutoff_arithmetic() {
        let c = adaptive_cutoff(1.0, 100, std::f64::consts::E);
        assert!((c - 0.2).abs() < 1e-15);
        assert!(0.5 >= c);
    }

    #[test]
    fn zero_theta_keeps_everything() {
        let est = two_by_two();
        let p = est.dim();
        let mut store = ZetaStore::new(p);
        for i in 0..p {
            for j in i..p {
                store.insert(i, j, ZetaSeries { values: vec![est.get(i, j); 10] });
            }
        }
        let (out, decisions) = threshold_adaptive(&est, &store, Kernel::QuadraticSpectral, true, false, 2.0, 10);
        assert_eq!(out, est);
        assert!(decisions.iter().all(|d| d.kept && d.cutoff == 0.0 && !d.fallback));
    }

    #[test]
    fn missing_series_falls_back() {
        let est = two_by_two();
        let store = ZetaStore::new(2);
        let (out, decisions) = threshold_adaptive(&est, &store, Kernel::QuadraticSpectral, true, false, 2.0, 100);
        assert!(decisions.iter().all(|d| d.fallback));
        assert_eq!(out, threshold_universal(&est, 2.0, 100, false));
    }
}
