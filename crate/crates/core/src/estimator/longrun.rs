//! Long-run variance of a ζ series with the quadratic spectral kernel.
//!
//! ```text
//! θ̂ = Σ_{|ℓ|<n} K(ℓ/h) Ĥ(ℓ),     Ĥ(ℓ) = n⁻¹ Σ_k c_k c_{k−|ℓ|}
//! h  = 1.3221 · (4 n ϑ̂² (1 − ϑ̂)⁻⁴)^{1/5}
//! ```
//!
//! `c` is the mean-centered series and `ϑ̂` its fitted AR(1) coefficient.
//! The sum runs over every lag; autocovariances come from a zero-padded real
//! FFT once the series is long enough for that to pay off.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use realfft::{RealFftPlanner, RealToComplex, ComplexToReal};
use serde::{Deserialize, Serialize};

/// Bound applied to the AR(1) coefficient before it enters the bandwidth formula.
pub const AR1_CLAMP: f64 = 0.97;

/// Bandwidths at or below this are treated as zero: `θ̂` falls back to `Ĥ(0)`.
pub const BANDWIDTH_EPS: f64 = f64::EPSILON;

/// Andrews' optimal-bandwidth constant for the quadratic spectral kernel.
const QS_BANDWIDTH_CONSTANT: f64 = 1.3221;

/// Below this length autocovariances are summed directly.
const DIRECT_AUTOCOV_MAX_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    QuadraticSpectral,
}

impl Kernel {
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Kernel::QuadraticSpectral => qs_kernel(x),
        }
    }
}

/// Quadratic spectral kernel `25/(12π²x²) · (sin(6πx/5)/(6πx/5) − cos(6πx/5))`.
pub fn qs_kernel(x: f64) -> f64 {
    let z = 6.0 * PI * x / 5.0;
    qs_from_angle(z)
}

const SERIES_SWITCH: f64 = 0.5;

/// The kernel written in terms of `z = 6πx/5`: `3/z² · (sin z / z − cos z)`.
#[inline]
fn qs_from_angle(z: f64) -> f64 {
    let z2 = z * z;
    if z.abs() < SERIES_SWITCH {
        // Series around the removable singularity; the closed form cancels badly here.
        // Coefficients are 3·(−1)^{n+1}·2n/(2n+1)! for n = 1..7.
        const C: [f64; 7] = [
            1.0,
            -1.0 / 10.0,
            1.0 / 280.0,
            -1.0 / 15_120.0,
            1.0 / 1_330_560.0,
            -1.0 / 172_972_800.0,
            1.0 / 31_135_104_000.0,
        ];
        return C.iter().rev().fold(0.0, |acc, c| acc * z2 + c);
    }
    let (s, c) = z.sin_cos();
    qs_from_sin_cos(z, s, c)
}

#[inline]
fn qs_from_sin_cos(z: f64, s: f64, c: f64) -> f64 {
    3.0 / (z * z) * (s / z - c)
}

/// Outcome of an AR(1) fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ar1Fit {
    /// Least-squares slope before clamping.
    pub raw: f64,
    /// Slope clamped into `[-AR1_CLAMP, AR1_CLAMP]`.
    pub coeff: f64,
    /// Set when the series is constant or too short to fit.
    pub degenerate: bool,
}

/// Least-squares AR(1) slope of `x_k` on `x_{k−1}` after centering, no intercept.
pub fn ar1_coeff(series: &[f64]) -> Ar1Fit {
    let degenerate = Ar1Fit {
        raw: 0.0,
        coeff: 0.0,
        degenerate: true,
    };
    if series.len() < 3 || is_constant(series) {
        return degenerate;
    }
    let centered = center(series);
    let mut num = 0.0;
    let mut den = 0.0;
    for w in centered.windows(2) {
        num += w[1] * w[0];
        den += w[0] * w[0];
    }
    if den <= 0.0 {
        return degenerate;
    }
    let raw = num / den;
    Ar1Fit {
        raw,
        coeff: raw.clamp(-AR1_CLAMP, AR1_CLAMP),
        degenerate: false,
    }
}

/// Andrews plug-in bandwidth for the quadratic spectral kernel.
pub fn andrews_bandwidth(n: usize, ar1: f64) -> f64 {
    let one_minus = 1.0 - ar1;
    let alpha = 4.0 * ar1 * ar1 / (one_minus * one_minus * one_minus * one_minus);
    QS_BANDWIDTH_CONSTANT * (alpha * n as f64).powf(0.2)
}

/// Kernel estimate of the long-run variance of `series` at bandwidth `h`.
///
/// Constant series give 0. With `clamp_negative` a negative estimate is
/// replaced by 0.
pub fn longrun_variance(series: &[f64], kernel: Kernel, h: f64, clamp_negative: bool) -> f64 {
    if series.is_empty() || is_constant(series) {
        return 0.0;
    }
    let gamma = autocovariances(&center(series));
    let theta = if h <= BANDWIDTH_EPS {
        gamma[0]
    } else {
        gamma[0] + 2.0 * weighted_lag_sum(&gamma, kernel, h)
    };
    if clamp_negative {
        theta.max(0.0)
    } else {
        theta
    }
}

/// `Σ_{ℓ≥1} K(ℓ/h) Ĥ(ℓ)`.
fn weighted_lag_sum(gamma: &[f64], kernel: Kernel, h: f64) -> f64 {
    match kernel {
        Kernel::QuadraticSpectral => {
            // z_ℓ = ℓ·step. sin/cos advance by rotation and are re-seeded
            // exactly every RESEED lags to keep the drift at a few ulps.
            const RESEED: usize = 128;
            let step = 6.0 * PI / (5.0 * h);
            let (ds, dc) = step.sin_cos();
            let mut acc = 0.0;
            let mut s = 0.0;
            let mut c = 1.0;
            for (lag, g) in gamma.iter().enumerate().skip(1) {
                let z = lag as f64 * step;
                if lag % RESEED == 1 || z.abs() < SERIES_SWITCH {
                    (s, c) = z.sin_cos();
                } else {
                    (s, c) = (s * dc + c * ds, c * dc - s * ds);
                }
                let w = if z.abs() < SERIES_SWITCH {
                    qs_from_angle(z)
                } else {
                    qs_from_sin_cos(z, s, c)
                };
                acc += w * g;
            }
            acc
        }
    }
}

fn is_constant(series: &[f64]) -> bool {
    series.iter().all(|v| *v == series[0])
}

fn center(series: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    for v in series {
        sum += v;
    }
    let mean = sum / series.len() as f64;
    series.iter().map(|v| v - mean).collect()
}

/// Biased sample autocovariances `Ĥ(ℓ) = n⁻¹ Σ_{k=ℓ}^{n−1} c_k c_{k−ℓ}` for `ℓ = 0..n`.
///
/// The input is assumed centered.
pub fn autocovariances(centered: &[f64]) -> Vec<f64> {
    let n = centered.len();
    if n <= DIRECT_AUTOCOV_MAX_LEN {
        autocovariances_direct(centered)
    } else {
        autocovariances_fft(centered)
    }
}

pub(crate) fn autocovariances_direct(centered: &[f64]) -> Vec<f64> {
    let n = centered.len();
    (0..n)
        .map(|lag| {
            let mut s = 0.0;
            for k in lag..n {
                s += centered[k] * centered[k - lag];
            }
            s / n as f64
        })
        .collect()
}

struct FftPlans {
    planner: RealFftPlanner<f64>,
    cached: Option<(usize, Arc<dyn RealToComplex<f64>>, Arc<dyn ComplexToReal<f64>>)>,
}

thread_local! {
    static PLANS: RefCell<FftPlans> = RefCell::new(FftPlans {
        planner: RealFftPlanner::new(),
        cached: None,
    });
}

pub(crate) fn autocovariances_fft(centered: &[f64]) -> Vec<f64> {
    let n = centered.len();
    let size = fft_size(2 * n - 1);
    let (forward, inverse) = PLANS.with(|plans| {
        let mut plans = plans.borrow_mut();
        match &plans.cached {
            Some((s, f, i)) if *s == size => (f.clone(), i.clone()),
            _ => {
                let f = plans.planner.plan_fft_forward(size);
                let i = plans.planner.plan_fft_inverse(size);
                plans.cached = Some((size, f.clone(), i.clone()));
                (f, i)
            }
        }
    });
    let mut input = forward.make_input_vec();
    input[..n].copy_from_slice(centered);
    let mut spectrum = forward.make_output_vec();
    forward
        .process(&mut input, &mut spectrum)
        .expect("buffer sizes come from the plan");
    for bin in spectrum.iter_mut() {
        *bin = realfft::num_complex::Complex::new(bin.norm_sqr(), 0.0);
    }
    let mut output = inverse.make_output_vec();
    inverse
        .process(&mut spectrum, &mut output)
        .expect("buffer sizes come from the plan");
    let scale = 1.0 / (size as f64 * n as f64);
    output.truncate(n);
    for v in output.iter_mut() {
        *v *= scale;
    }
    output
}

/// Smallest even 5-smooth length `≥ min_len`.
fn fft_size(min_len: usize) -> usize {
    let mut best = min_len.next_power_of_two().max(2);
    let mut p2 = 2;
    while p2 < best {
        let mut p3 = p2;
        while p3 < best {
            let mut p5 = p3;
            while p5 < best {
                if p5 >= min_len {
                    best = p5;
                    break;
                }
                p5 *= 5;
            }
            p3 *= 3;
        }
        p2 *= 2;
    }
    best
}
