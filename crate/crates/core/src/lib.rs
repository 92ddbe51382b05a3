//! Heterogeneity-aware spatio-temporal quantile regression for daily
//! temperature series.
//!
//! The crate covers the whole pipeline:
//!
//! - [`data`]: station CSV ingestion on a 365-day calendar, selection rules,
//!   time normalization.
//! - [`harmonics`]: truncated Fourier series in day of year.
//! - [`exploratory`]: parametric mean model with AR residuals and ACF
//!   diagnostics.
//! - [`variance`]: inter-annual day-of-year statistics and the seasonal
//!   log-variance model that yields `σ_d`.
//! - [`quantile`]: the piecewise-Gaussian quantile basis, quantile surface,
//!   closed-form density and sampling.
//! - [`gp`]: exponential-covariance Gaussian-process priors.
//! - [`mcmc`]: Metropolis-within-Gibbs inference with an optional latent
//!   AR(1) copula, and trend-function summaries.
//! - [`sim`]: synthetic data generation and the with/without-`σ_d`
//!   comparison study.
//! - [`report`]: run configuration, per-decade conversion and the command
//!   drivers behind the `stqr` binary.

pub mod data;
pub mod exploratory;
pub mod gp;
pub mod error;
pub mod harmonics;
pub mod lsq;
pub mod math;
pub mod mcmc;
pub mod quantile;
pub mod report;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};
