//! Simulation laboratory: latent Heston paths, noise models, sampling
//! schemes, and the Monte Carlo experiment runner.

pub mod experiment;
pub mod heston;
pub mod noise;
pub mod rng;
pub mod sampling;

pub use experiment::{aggregate, CellSummary, Experiment, ExperimentSpec, MeanSe, ReplicationRow};
pub use heston::{build_brownian_corr, heston_paths, HestonConfig, LatentPaths};
pub use noise::{noise_correlation, noise_cov, sample_noise, sample_noise_from_cov, NoiseDraws, NoiseModel, NoiseVariant};
pub use sampling::{sample_async, sample_sync, tick_probability, ArrivalRule, SamplingScheme};
