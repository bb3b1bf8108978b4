//! Covariance estimation for the microstructure noise in asynchronous
//! high-frequency observations.
//!
//! Observed prices are `Y = X + U`: a latent diffusion `X` plus i.i.d. noise
//! `U` with covariance `Σ_u`. Differencing observations that are close in
//! time removes most of `X`, so pairwise local products estimate `Σ_u`
//! entry by entry on each pair's common grid; thresholding then exploits
//! sparsity of `Σ_u` in high dimension.
//!
//! * [`panel`]: observation grids, pairwise intersections, tick CSV I/O.
//! * [`estimator`]: localized estimators, long-run variance, thresholding.
//! * [`simlab`]: Heston latent paths, noise models, (a)synchronous sampling,
//!   and the Monte Carlo experiment runner.
//! * [`metrics`]: error norms, support recovery, rate fits.
//! * [`cli`]: the `noisecov` command-line front end.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod panel;
pub mod simlab;

pub use error::{Error, Result};
pub use estimator::{estimate, estimate_matrix, Estimate, EstimatorConfig, ThresholdRule, WindowRule};
pub use matrix::CovMatrix;
pub use panel::{AsyncPanel, PairGrid, PanelSummary, Series};
