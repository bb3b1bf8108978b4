//! Shared helpers for integration tests: an O(n²) reference evaluation of
//! the localized estimator and random pair-grid generation.

#![allow(dead_code)]

use noisecov::PairGrid;
use rand::Rng;

/// Mean over `k` of `ζ_k = Σ_{ℓ ∈ S_k} (y_i,ℓ − y_i,k)(y_j,ℓ − y_j,k) / (2|S_k|)`,
/// scanning every `ℓ` and testing membership with `in_window(k, ℓ)`.
/// Observations with an empty neighborhood are skipped.
pub fn brute_force(yi: &[f64], yj: &[f64], in_window: impl Fn(usize, usize) -> bool) -> Option<f64> {
    let n = yi.len();
    let mut zetas = Vec::new();
    for k in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for l in 0..n {
            if l != k && in_window(k, l) {
                sum += (yi[l] - yi[k]) * (yj[l] - yj[k]);
                count += 1;
            }
        }
        if count > 0 {
            zetas.push(sum / (2.0 * count as f64));
        }
    }
    if zetas.is_empty() {
        return None;
    }
    Some(zetas.iter().sum::<f64>() / zetas.len() as f64)
}

pub fn brute_force_k(grid: &PairGrid, half_width: usize) -> Option<f64> {
    brute_force(&grid.values_i, &grid.values_j, |k, l| k.abs_diff(l) <= half_width)
}

pub fn brute_force_xi(grid: &PairGrid, xi: f64, tick_duration: f64) -> Option<f64> {
    let t = &grid.ticks;
    brute_force(&grid.values_i, &grid.values_j, |k, l| {
        (t[k].abs_diff(t[l]) as f64) * tick_duration <= xi
    })
}

/// A pair grid with `2..=max_n` points, random tick gaps in `1..=5` and values in `[-1, 1)`.
pub fn random_grid<R: Rng>(rng: &mut R, max_n: usize) -> PairGrid {
    let n = rng.random_range(2..=max_n);
    let mut t = 0u64;
    let ticks: Vec<u64> = (0..n)
        .map(|_| {
            t += rng.random_range(1..=5);
            t
        })
        .collect();
    let yi = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let yj = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    PairGrid::new(ticks, yi, yj).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub mod props {
    //! Strategies and property bodies shared by the proptest suite and the
    //! acceptance runner.

    use noisecov::estimator::{local_cov_k, local_cov_xi, qs_kernel, threshold_universal, universal_cutoff};
    use noisecov::linalg::{symmetric_eigenvalues, SymmetricFactor};
    use noisecov::simlab::{build_brownian_corr, heston_paths, Experiment, ExperimentSpec, HestonConfig};
    use noisecov::{estimate, AsyncPanel, CovMatrix, EstimatorConfig, PairGrid, Series, ThresholdRule, WindowRule};
    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::{brute_force_k, brute_force_xi, rel_diff};

    pub type Check = Result<(), TestCaseError>;

    pub fn pair_grid() -> impl Strategy<Value = PairGrid> {
        (2usize..=50)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(1u64..6, n),
                    prop::collection::vec(-1.0f64..1.0, n),
                    prop::collection::vec(-1.0f64..1.0, n),
                )
            })
            .prop_map(|(gaps, yi, yj)| {
                let ticks = gaps
                    .iter()
                    .scan(0u64, |t, g| {
                        *t += g;
                        Some(*t)
                    })
                    .collect();
                PairGrid::new(ticks, yi, yj).unwrap()
            })
    }

    /// A small panel of 2 to 4 assets on random grids drawn from ticks `1..60`.
    pub fn panel() -> impl Strategy<Value = AsyncPanel> {
        (2usize..5)
            .prop_flat_map(|p| prop::collection::vec(prop::collection::btree_map(1u64..60, -1.0f64..1.0, 8..40), p))
            .prop_map(|assets| {
                let series = assets
                    .into_iter()
                    .map(|m| {
                        let (t, v) = m.into_iter().unzip();
                        Series::new(t, v).unwrap()
                    })
                    .collect();
                AsyncPanel::from_series(series, 1.0).unwrap()
            })
    }

    pub fn symmetric_matrix() -> impl Strategy<Value = CovMatrix> {
        (1usize..7).prop_flat_map(|p| prop::collection::vec(-1.0f64..1.0, p * p)).prop_map(|v| {
            let p = (v.len() as f64).sqrt() as usize;
            let mut m = CovMatrix::zeros(p);
            for i in 0..p {
                for j in i..p {
                    m.set_sym(i, j, v[i * p + j]);
                }
            }
            m
        })
    }

    pub fn index_window_matches_brute_force(g: &PairGrid, k: usize) -> Check {
        let (est, _) = local_cov_k(g, k).unwrap();
        let want = brute_force_k(g, k).unwrap();
        prop_assert!(rel_diff(est, want) <= 1e-12, "{est} vs {want}");
        Ok(())
    }

    pub fn time_window_matches_brute_force(g: &PairGrid, xi: f64) -> Check {
        match (local_cov_xi(g, xi, 1.0), brute_force_xi(g, xi, 1.0)) {
            (Ok((est, _)), Some(want)) => prop_assert!(rel_diff(est, want) <= 1e-12, "{est} vs {want}"),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
        }
        Ok(())
    }

    pub fn windows_agree_on_unit_spaced_grids(y: Vec<(f64, f64)>, k: usize, td: f64) -> Check {
        let ticks = (1..=y.len() as u64).collect();
        let (yi, yj) = y.into_iter().unzip();
        let g = PairGrid::new(ticks, yi, yj).unwrap();
        // ξ = K·td covers exactly K ticks each side.
        let a = local_cov_k(&g, k).unwrap();
        let b = local_cov_xi(&g, k as f64 * td, td).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1, b.1);
        Ok(())
    }

    pub fn pair_estimate_is_symmetric_in_assets(g: &PairGrid, k: usize) -> Check {
        let swapped = PairGrid::new(g.ticks.clone(), g.values_j.clone(), g.values_i.clone()).unwrap();
        prop_assert_eq!(local_cov_k(g, k).unwrap().0, local_cov_k(&swapped, k).unwrap().0);
        Ok(())
    }

    pub fn neighborhoods_are_symmetric(g: &PairGrid, xi: f64, k: usize) -> Check {
        for a in 0..g.len() {
            for b in g.neighborhood_xi(a, xi, 1.0) {
                prop_assert!(g.neighborhood_xi(b, xi, 1.0).contains(&a));
            }
            for b in g.neighborhood_k(a, k) {
                prop_assert!(g.neighborhood_k(b, k).contains(&a));
            }
        }
        Ok(())
    }

    pub fn estimate_is_symmetric_and_permutation_equivariant(panel: &AsyncPanel, k: usize) -> Check {
        let cfg = EstimatorConfig::default()
            .with_window(WindowRule::Index { k })
            .with_threshold(ThresholdRule::None);
        let est = estimate(panel, &cfg).unwrap();
        prop_assert!(est.raw.is_symmetric());
        let p = panel.p();
        let perm: Vec<usize> = (0..p).rev().collect();
        let permuted = AsyncPanel::new(
            perm.iter().map(|&i| panel.assets()[i].clone()).collect(),
            perm.iter().map(|&i| panel.series(i).clone()).collect(),
            1.0,
        )
        .unwrap();
        let est2 = estimate(&permuted, &cfg).unwrap();
        for a in 0..p {
            for b in 0..p {
                prop_assert_eq!(est2.raw.get(a, b), est.raw.get(perm[a], perm[b]));
            }
        }
        Ok(())
    }

    pub fn universal_threshold_is_idempotent(m: &CovMatrix, beta: f64, n: usize, exempt: bool) -> Check {
        let once = threshold_universal(m, beta, n, exempt);
        prop_assert_eq!(threshold_universal(&once, beta, n, exempt), once);
        Ok(())
    }

    pub fn universal_threshold_is_monotone(m: &CovMatrix, b1: f64, extra: f64, n: usize) -> Check {
        let loose = threshold_universal(m, b1, n, false);
        let tight = threshold_universal(m, b1 + extra, n, false);
        for (t, l) in tight.as_slice().iter().zip(loose.as_slice()) {
            prop_assert!(*t == 0.0 || *l != 0.0);
        }
        prop_assert!(universal_cutoff(b1 + extra, n, m.dim()) >= universal_cutoff(b1, n, m.dim()));
        Ok(())
    }

    pub fn qs_kernel_identities(x: f64) -> Check {
        let k = qs_kernel(x);
        prop_assert_eq!(k, qs_kernel(-x));
        prop_assert!(k <= 1.0 && k > -0.1);
        if x.abs() > 1.0 {
            // The closed form is bounded by 3/z² · (1/z + 1).
            let z = 6.0 * std::f64::consts::PI * x.abs() / 5.0;
            prop_assert!(k.abs() <= 3.0 / (z * z) * (1.0 / z + 1.0));
        }
        Ok(())
    }

    pub fn correlation_builder_unit_diagonal_psd(p: usize, a: f64) -> Check {
        let rho = build_brownian_corr(p, a);
        prop_assert!(rho.diagonal().iter().all(|d| *d == 1.0));
        prop_assert!(rho.is_symmetric());
        prop_assert!(symmetric_eigenvalues(&rho)[0] >= -1e-10);
        Ok(())
    }

    pub fn panel_csv_round_trip(panel: &AsyncPanel) -> Check {
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = AsyncPanel::read_csv(buf.as_slice(), 1.0).unwrap();
        prop_assert_eq!(&back, panel);
        Ok(())
    }

    pub fn heston_variance_nonnegative(seed: u64, kappa: f64, s: f64, sigma_bar_sq: f64, varsigma: f64) -> Check {
        let cfg = HestonConfig {
            p: 3,
            kappa,
            s,
            sigma_bar_sq,
            varsigma,
            ticks_per_day: 2_000,
            day_length: 0.5,
            ..HestonConfig::default()
        };
        let f = SymmetricFactor::new(&build_brownian_corr(3, cfg.corr_decay)).unwrap();
        let paths = heston_paths(&cfg, &f, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(paths.variance.iter().all(|v| *v >= 0.0));
        prop_assert!(paths.x.iter().all(|v| v.is_finite()));
        Ok(())
    }

    pub fn simulation_is_reproducible(seed: u64, rep: u64) -> Check {
        let spec: ExperimentSpec = serde_json::from_value(serde_json::json!({
            "heston": { "p": 3, "ticks_per_day": 300 },
            "noise": { "model": "m2" },
            "sampling": [{ "scheme": "async", "lambda": 2.5 }],
            "K": [3],
            "replications": 1,
            "seed": seed,
        }))
        .unwrap();
        let a = Experiment::new(spec.clone()).unwrap().panel(0, rep).unwrap();
        let b = Experiment::new(spec).unwrap().panel(0, rep).unwrap();
        prop_assert_eq!(&a, &b);
        let cfg = EstimatorConfig::default().with_window(WindowRule::Index { k: 3 });
        prop_assert_eq!(estimate(&a, &cfg).unwrap().thresholded, estimate(&b, &cfg).unwrap().thresholded);
        Ok(())
    }
}
