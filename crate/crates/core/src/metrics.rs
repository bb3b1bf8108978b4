//! Evaluation metrics for covariance estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CovMatrix;

/// Convergence tolerance of [`spectral_norm`].
pub const SPECTRAL_TOLERANCE: f64 = 1e-10;
/// Iteration cap of [`spectral_norm`].
pub const SPECTRAL_MAX_ITER: usize = 10_000;

fn same_dim(a: &CovMatrix, b: &CovMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// `‖est − truth‖_F / ‖truth‖_F`.
pub fn rel_frobenius(est: &CovMatrix, truth: &CovMatrix) -> Result<f64> {
    same_dim(est, truth)?;
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let num: f64 = est
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num.sqrt() / denom)
}

/// Largest absolute entry-wise difference.
pub fn max_abs_diff(est: &CovMatrix, truth: &CovMatrix) -> Result<f64> {
    same_dim(est, truth)?;
    Ok(est
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
}

pub fn difference(a: &CovMatrix, b: &CovMatrix) -> Result<CovMatrix> {
    same_dim(a, b)?;
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
    CovMatrix::from_row_major(a.dim(), data)
}

fn content_seed(m: &CovMatrix) -> u64 {
    // FNV-1a over the entry bit patterns.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.as_slice() {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mat_vec(m: &CovMatrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = m.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
///
/// Power iteration on `A²`, which is insensitive to `±λ` pairs of equal
/// magnitude. The start vector is derived from the matrix contents, so the
/// result is reproducible. Iteration stops once the `A²` eigen-residual is
/// below `SPECTRAL_TOLERANCE` relative to the Rayleigh quotient.
pub fn spectral_norm(m: &CovMatrix) -> Result<f64> {
    let p = m.dim();
    if p == 0 || m.as_slice().iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut state = content_seed(m);
    let mut v: Vec<f64> = (0..p)
        .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 + 0.5)
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut av = vec![0.0; p];
    let mut a2v = vec![0.0; p];
    let mut residual = f64::INFINITY;
    for _ in 0..SPECTRAL_MAX_ITER {
        mat_vec(m, &v, &mut av);
        mat_vec(m, &av, &mut a2v);
        // Rayleigh quotient of A² at unit v is ‖Av‖².
        let mu: f64 = av.iter().map(|x| x * x).sum();
        if mu == 0.0 {
            // v fell into the null space; restart from a coordinate direction.
            v.iter_mut().for_each(|x| *x = 0.0);
            let (k, _) = m
                .diagonal()
                .iter()
                .enumerate()
                .fold((0, -1.0), |b, (i, d)| if d.abs() > b.1 { (i, d.abs()) } else { b });
            v[k] = 1.0;
            continue;
        }
        residual = a2v
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - mu * x) * (a - mu * x))
            .sum::<f64>()
            .sqrt()
            / mu;
        let n = norm(&a2v);
        for (x, a) in v.iter_mut().zip(&a2v) {
            *x = a / n;
        }
        if residual <= SPECTRAL_TOLERANCE {
            // Rayleigh quotient at the updated vector.
            mat_vec(m, &v, &mut av);
            return Ok(norm(&av));
        }
    }
    Err(Error::NonConvergence {
        residual,
        iterations: SPECTRAL_MAX_ITER,
    })
}

/// True and false positive rates of the estimated support, over all `p²` ordered entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportRates {
    pub tpr: f64,
    pub fpr: f64,
    /// False when the truth has no zero entries; `fpr` is then reported as 0.
    pub fpr_applicable: bool,
}

pub fn tpr_fpr(est: &CovMatrix, truth: &CovMatrix) -> Result<SupportRates> {
    same_dim(est, truth)?;
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (e, t) in est.as_slice().iter().zip(truth.as_slice()) {
        if *t != 0.0 {
            pos += 1;
            tp += usize::from(*e != 0.0);
        } else {
            neg += 1;
            fp += usize::from(*e != 0.0);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(SupportRates {
        tpr: ratio(tp, pos),
        fpr: ratio(fp, neg),
        fpr_applicable: neg > 0,
    })
}

/// Least-squares fit of `log error = intercept + slope · log n_*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn rate_check(errors_by_n_star: &[(f64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<f64> = errors_by_n_star.iter().map(|(n, _)| *n).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "rate check needs at least 3 distinct n_star values, got {}",
            distinct.len()
        )));
    }
    if errors_by_n_star.iter().any(|(n, e)| !(*n > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidConfig(
            "rate check needs positive n_star and error values".into(),
        ));
    }
    let xs: Vec<f64> = errors_by_n_star.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = errors_by_n_star.iter().map(|(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        points: xs.len(),
    })
}

/// Error summary of one estimate against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub p: usize,
    pub k: usize,
    pub scheme: String,
    pub replication: u64,
    pub rel_frobenius: f64,
    pub max_abs: f64,
    pub spectral_error: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub fpr_applicable: bool,
}

/// Column order of [`EvalReport`] CSV rows.
pub const EVAL_CSV_HEADER: [&str; 10] = [
    "p",
    "k",
    "scheme",
    "replication",
    "rel_frobenius",
    "max_abs",
    "spectral_error",
    "tpr",
    "fpr",
    "fpr_applicable",
];

impl EvalReport {
    pub fn evaluate(
        est: &CovMatrix,
        truth: &CovMatrix,
        k: usize,
        scheme: impl Into<String>,
        replication: u64,
    ) -> Result<Self> {
        let support = tpr_fpr(est, truth)?;
        Ok(Self {
            p: truth.dim(),
            k,
            scheme: scheme.into(),
            replication,
            rel_frobenius: rel_frobenius(est, truth)?,
            max_abs: max_abs_diff(est, truth)?,
            spectral_error: spectral_norm(&difference(est, truth)?)?,
            tpr: support.tpr,
            fpr: support.fpr,
            fpr_applicable: support.fpr_applicable,
        })
    }

    pub fn csv_record(&self) -> [String; 10] {
        [
            self.p.to_string(),
            self.k.to_string(),
            self.scheme.clone(),
            self.replication.to_string(),
            self.rel_frobenius.to_string(),
            self.max_abs.to_string(),
            self.spectral_error.to_string(),
            self.tpr.to_string(),
            self.fpr.to_string(),
            self.fpr_applicable.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(p: usize, seed: u64) -> CovMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CovMatrix::zeros(p);
        for i in 0..p {
            for j in 0..=i {
                m.set_sym(i, j, rng.random_range(-1.0..1.0));
            }
        }
        m
    }

    #[test]
    fn rel_frobenius_basics() {
        let t = random_sym(4, 1);
        assert_eq!(rel_frobenius(&t, &t).unwrap(), 0.0);
        assert!((rel_frobenius(&t.scaled(2.0), &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(rel_frobenius(&t, &CovMatrix::zeros(4)), Err(Error::UndefinedRatio)));
        assert!(rel_frobenius(&t, &CovMatrix::zeros(3)).is_err());
    }

    #[test]
    fn rel_frobenius_matches_elementwise_oracle() {
        let (a, b) = (random_sym(4, 2), random_sym(4, 3));
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                num += (a.get(i, j) - b.get(i, j)).powi(2);
                den += b.get(i, j).powi(2);
            }
        }
        let want = (num / den).sqrt();
        assert!((rel_frobenius(&a, &b).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn max_abs_basics() {
        let t = random_sym(4, 4);
        assert_eq!(max_abs_diff(&t, &t).unwrap(), 0.0);
        let mut e = t.clone();
        e.set_sym(1, 3, t.get(1, 3) + 0.25);
        assert!((max_abs_diff(&e, &t).unwrap() - 0.25).abs() < 1e-15);
        let (a, b) = (random_sym(5, 8), random_sym(5, 9));
        let want = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .map(|(i, j)| (a.get(i, j) - b.get(i, j)).abs())
            .fold(0.0, f64::max);
        assert_eq!(max_abs_diff(&a, &b).unwrap(), want);
    }

    #[test]
    fn spectral_norm_cases() {
        assert!((spectral_norm(&CovMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&CovMatrix::from_diagonal(&[1.0, -3.0, 2.0])).unwrap() - 3.0).abs() < 1e-10);
        assert!((spectral_norm(&CovMatrix::from_diagonal(&[3.0, -3.0])).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&CovMatrix::zeros(3)).unwrap(), 0.0);
        for seed in 0..20 {
            let m = random_sym(6, 100 + seed);
            let eig = crate::linalg::symmetric_eigenvalues(&m);
            let want = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let got = spectral_norm(&m).unwrap();
            assert!((got - want).abs() < 1e-8 * want.max(1.0), "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn support_rates() {
        let truth = CovMatrix::from_rows(&[
            vec![1.0, 0.6, 0.0],
            vec![0.6, 1.0, 0.6],
            vec![0.0, 0.6, 1.0],
        ])
        .unwrap();
        let r = tpr_fpr(&truth, &truth).unwrap();
        assert_eq!((r.tpr, r.fpr, r.fpr_applicable), (1.0, 0.0, true));
        let r = tpr_fpr(&CovMatrix::zeros(3), &truth).unwrap();
        assert_eq!((r.tpr, r.fpr), (0.0, 0.0));
        // One missed off-diagonal pair (2 entries of 7 positives), one false pair (2 of 2 negatives).
        let est = CovMatrix::from_rows(&[
            vec![1.0, 0.0, 0.1],
            vec![0.0, 1.0, 0.6],
            vec![0.1, 0.6, 1.0],
        ])
        .unwrap();
        let r = tpr_fpr(&est, &truth).unwrap();
        assert!((r.tpr - 5.0 / 7.0).abs() < 1e-15);
        assert_eq!(r.fpr, 1.0);
        let dense = CovMatrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
        assert!(!tpr_fpr(&dense, &dense).unwrap().fpr_applicable);
    }

    #[test]
    fn rate_fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [500.0, 1000.0, 4000.0, 9000.0]
            .iter()
            .map(|n: &f64| (*n, 3.0 * n.powf(-0.5)))
            .collect();
        let fit = rate_check(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0_f64.ln()).abs() < 1e-12);
        assert!(rate_check(&pts[..2]).is_err());
        assert!(rate_check(&[(10.0, 1.0), (10.0, 2.0), (20.0, 1.0)]).is_err());
    }
}
