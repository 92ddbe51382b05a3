//! Posterior samples and summaries of the trend function.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sampler::HyperGroup;
use crate::error::{Error, Result};
use crate::math::quantile_sorted;
use crate::quantile::{quantile_eval, trend_function, Covariates, ModelSpec, QuantileCoeffs};

/// One retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    /// Iteration number (counting burn-in).
    pub iter: usize,
    pub coeffs: Vec<QuantileCoeffs>,
    pub beta_hyper: Vec<HyperGroup>,
    pub theta_hyper: Vec<HyperGroup>,
    pub psi_v: Option<f64>,
    pub psi_w: Option<f64>,
    pub log_post: f64,
}

/// Acceptance rate of one update block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRate {
    /// `None` for blocks shared by all stations.
    pub station_id: Option<String>,
    pub block: String,
    pub rate: f64,
}

impl BlockRate {
    pub(crate) fn station(id: &str, block: &str, rate: f64) -> Self {
        BlockRate {
            station_id: Some(id.to_string()),
            block: block.to_string(),
            rate,
        }
    }

    pub(crate) fn global(block: &str, rate: f64) -> Self {
        BlockRate {
            station_id: None,
            block: block.to_string(),
            rate,
        }
    }
}

/// Posterior mean, standard deviation and equal-tailed credible interval
/// of a scalar at level `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub tau: f64,
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TrendPoint {
    /// Summarizes draws. The interval is widened to contain the mean if a
    /// very skewed sample puts the mean outside it.
    pub fn from_draws(tau: f64, draws: &[f64], level: f64) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = if draws.len() > 1 {
            (draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        let a = 0.5 * (1.0 - level);
        let lo = quantile_sorted(&sorted, a).min(mean);
        let hi = quantile_sorted(&sorted, 1.0 - a).max(mean);
        TrendPoint { tau, mean, sd, lo, hi }
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn require_samples(samples: &[PosteriorSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no retained posterior samples".into()));
    }
    Ok(())
}

/// Pointwise posterior summary of `g₁(τ | s)` over a grid of levels.
pub fn trend_summary(
    spec: &ModelSpec,
    samples: &[PosteriorSample],
    tau_grid: &[f64],
    station: usize,
    level: f64,
) -> Result<Vec<TrendPoint>> {
    if tau_grid.is_empty() {
        return Err(Error::Domain("empty quantile-level grid".into()));
    }
    require_samples(samples)?;
    tau_grid
        .iter()
        .map(|&tau| {
            let draws = samples
                .iter()
                .map(|s| trend_function(spec, &s.coeffs[station], tau))
                .collect::<Result<Vec<_>>>()?;
            Ok(TrendPoint::from_draws(tau, &draws, level))
        })
        .collect()
}

/// Posterior summary of `q(τ | s, t)` at one covariate point.
pub fn quantile_summary(
    spec: &ModelSpec,
    samples: &[PosteriorSample],
    station: usize,
    tau: f64,
    cov: &Covariates,
    level: f64,
) -> Result<TrendPoint> {
    require_samples(samples)?;
    let draws = samples
        .iter()
        .map(|s| quantile_eval(spec, &s.coeffs[station], tau, cov))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrendPoint::from_draws(tau, &draws, level))
}

/// Coefficient-wise posterior means. Because `g₁` and `q` are linear in the
/// coefficients, their posterior means equal their values here.
pub fn posterior_mean_coeffs(samples: &[PosteriorSample]) -> Result<Vec<QuantileCoeffs>> {
    require_samples(samples)?;
    let n = samples.len() as f64;
    let mut out = samples[0].coeffs.clone();
    for c in out.iter_mut() {
        c.beta.iter_mut().for_each(|v| *v = 0.0);
        c.theta.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
    for s in samples {
        for (acc, c) in out.iter_mut().zip(&s.coeffs) {
            for (a, v) in acc.beta.iter_mut().zip(&c.beta) {
                *a += v / n;
            }
            for (a, v) in acc.theta.iter_mut().flatten().zip(c.theta.iter().flatten()) {
                *a += v / n;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSummary {
    pub station_id: String,
    pub trend: Vec<TrendPoint>,
    /// Mean acceptance rate over the station's coefficient blocks.
    pub accept_rate_block: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub stations: Vec<StationSummary>,
    pub blocks: Vec<BlockRate>,
    pub n_samples: usize,
    pub ci_level: f64,
}

impl PosteriorSummary {
    pub fn build(
        spec: &ModelSpec,
        station_ids: &[String],
        samples: &[PosteriorSample],
        blocks: Vec<BlockRate>,
        tau_grid: &[f64],
        level: f64,
    ) -> Result<Self> {
        let stations = station_ids
            .iter()
            .enumerate()
            .map(|(s, id)| {
                let rates: Vec<f64> = blocks
                    .iter()
                    .filter(|b| b.station_id.as_deref() == Some(id.as_str()))
                    .map(|b| b.rate)
                    .collect();
                let accept_rate_block = if rates.is_empty() {
                    f64::NAN
                } else {
                    rates.iter().sum::<f64>() / rates.len() as f64
                };
                Ok(StationSummary {
                    station_id: id.clone(),
                    trend: trend_summary(spec, samples, tau_grid, s, level)?,
                    accept_rate_block,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PosteriorSummary {
            stations,
            blocks,
            n_samples: samples.len(),
            ci_level: level,
        })
    }

    /// `station_id,tau,g1_mean,g1_lo,g1_hi,accept_rate_block`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["station_id", "tau", "g1_mean", "g1_lo", "g1_hi", "accept_rate_block"])?;
        for st in &self.stations {
            for p in &st.trend {
                w.write_record([
                    st.station_id.clone(),
                    p.tau.to_string(),
                    p.mean.to_string(),
                    p.lo.to_string(),
                    p.hi.to_string(),
                    st.accept_rate_block.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Long-format sample dump: `iter,station_id,slot,l,value`, with `l = 0`
/// for median coefficients and `1..L` for the scale of piece `l`.
pub fn write_samples_csv(spec: &ModelSpec, station_ids: &[String], samples: &[PosteriorSample], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "iter,station_id,slot,l,value").map_err(io)?;
    for smp in samples {
        for (id, c) in station_ids.iter().zip(&smp.coeffs) {
            for (slot, v) in spec.beta_slots().iter().zip(&c.beta) {
                writeln!(w, "{},{},{},0,{}", smp.iter, id, slot.name(), v).map_err(io)?;
            }
            for (l, th) in c.theta.iter().enumerate() {
                for (slot, v) in spec.theta_slots().iter().zip(th) {
                    writeln!(w, "{},{},{},{},{}", smp.iter, id, slot.name(), l + 1, v).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}
