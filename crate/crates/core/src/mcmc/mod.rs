//! Bayesian inference for the spatio-temporal quantile model.
//!
//! Every coefficient of every station is a Gaussian-process field over
//! station locations. The sampler is Metropolis within Gibbs: per-station
//! blocks for the median and for each piece's scale, random walks for the
//! GP hyperparameters, and single-site moves for the optional latent copula
//! path that links the quantile levels of consecutive days.

mod adapt;
pub mod data;
pub mod latent;
pub mod sampler;
pub mod summary;

pub use data::{FitData, Obs, StationData};
pub use latent::{simulate_latent, LatentCopula};
pub use sampler::{log_likelihood, log_posterior, ChainState, HyperGroup, Sampler};
pub use summary::{
    posterior_mean_coeffs, quantile_summary, trend_summary, write_samples_csv, BlockRate, PosteriorSample,
    PosteriorSummary, StationSummary, TrendPoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::HyperPrior;
use crate::quantile::check_positive_scales;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total iterations, burn-in included.
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    /// Acceptance rate the step sizes adapt toward during burn-in.
    pub target_accept: f64,
    /// Multiplier on every block's initial step size; 0 freezes the chain.
    pub proposal_scale: f64,
    pub adapt: bool,
    pub update_coeffs: bool,
    pub update_hypers: bool,
    /// Latent AR(1) copula for temporal dependence.
    pub copula: bool,
    pub psi_v_init: f64,
    pub hyper_prior: HyperPrior,
    pub tau_grid: Vec<f64>,
    pub ci_level: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 4000,
            n_burn: 2000,
            thin: 2,
            seed: 1,
            target_accept: 0.35,
            proposal_scale: 1.0,
            adapt: true,
            update_coeffs: true,
            update_hypers: true,
            copula: true,
            psi_v_init: 0.2,
            hyper_prior: HyperPrior::default(),
            tau_grid: vec![0.1, 0.5, 0.9],
            ci_level: 0.95,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_iter == 0 || self.thin == 0 {
            return bad("n_iter and thin must be positive".into());
        }
        if self.n_burn >= self.n_iter {
            return bad(format!("n_burn ({}) must be below n_iter ({})", self.n_burn, self.n_iter));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target_accept {} outside (0, 1)", self.target_accept));
        }
        if !(self.proposal_scale >= 0.0 && self.proposal_scale.is_finite()) {
            return bad(format!("proposal_scale {} must be finite and nonnegative", self.proposal_scale));
        }
        if !(self.psi_v_init.abs() < 1.0) {
            return bad(format!("psi_v_init {} outside (-1, 1)", self.psi_v_init));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!("ci_level {} outside (0, 1)", self.ci_level));
        }
        if self.tau_grid.is_empty() || self.tau_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("tau grid must be nonempty with levels in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<PosteriorSample>,
    pub summary: PosteriorSummary,
    pub state: ChainState,
}

/// Runs one chain from the default starting point.
pub fn run_chain(config: &ChainConfig, data: &FitData) -> Result<ChainOutput> {
    let sampler = Sampler::new(config, data)?;
    run_sampler(sampler, config, data)
}

/// Runs an initialized sampler to completion: burn-in is discarded and
/// every `thin`-th later state is kept.
pub fn run_sampler(mut sampler: Sampler<'_>, config: &ChainConfig, data: &FitData) -> Result<ChainOutput> {
    let mut samples = Vec::with_capacity((config.n_iter - config.n_burn).div_ceil(config.thin));
    for i in 0..config.n_iter {
        if i == config.n_burn {
            sampler.set_burn_in(false);
        }
        sampler.step();
        if i >= config.n_burn && (i - config.n_burn) % config.thin == 0 {
            let smp = sampler.sample();
            for c in &smp.coeffs {
                assert!(
                    check_positive_scales(&data.spec, c, &data.ranges).passed(),
                    "retained sample violates scale positivity"
                );
            }
            samples.push(smp);
        }
    }
    let ids: Vec<String> = data.stations.iter().map(|s| s.station_id.clone()).collect();
    let summary =
        PosteriorSummary::build(&data.spec, &ids, &samples, sampler.acceptance(), &config.tau_grid, config.ci_level)?;
    Ok(ChainOutput {
        samples,
        summary,
        state: sampler.into_state(),
    })
}
