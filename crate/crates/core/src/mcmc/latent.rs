//! Latent AR(1) copula process.
//!
//! `v_1 = w_1`, `v_t = ψ_v v_{t−1} + √(1−ψ_v²) w_t`, where each `w_t` is a
//! spatial field with unit sill and correlation `exp(−‖s−s′‖/ψ_w)`, so
//! every `v_t(s)` is marginally standard normal. The level
//! `u_t(s) = Φ(v_t(s))` selects the active piece of the quantile function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpFactor, Location};
use crate::math::LN_SQRT_2PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCopula {
    /// Temporal persistence, in (−1, 1).
    pub psi_v: f64,
    /// Spatial range of the innovations, in degrees.
    pub psi_w: f64,
    /// `v[station][cell]`.
    pub v: Vec<Vec<f64>>,
}

impl LatentCopula {
    pub fn validate(&self) -> Result<()> {
        if !(self.psi_v.abs() < 1.0) || !(self.psi_w > 0.0) {
            return Err(Error::Domain(format!(
                "copula needs |psi_v| < 1 and psi_w > 0, got {} and {}",
                self.psi_v, self.psi_w
            )));
        }
        Ok(())
    }

    pub fn n_time(&self) -> usize {
        self.v.first().map_or(0, |r| r.len())
    }

    /// `u_t(s) = Φ(v_t(s))`.
    pub fn level(&self, station: usize, cell: usize) -> f64 {
        crate::math::norm_cdf(self.v[station][cell])
    }
}

/// Correlation factor of the innovations.
pub(crate) fn innovation_factor(locations: &[Location], psi_w: f64) -> Result<GpFactor> {
    GpFactor::exponential(locations, 1.0, psi_w)
}

/// Innovation `w_t(s)` implied by the path.
#[inline]
pub(crate) fn innovation(v: &[Vec<f64>], psi_v: f64, station: usize, t: usize) -> f64 {
    if t == 0 {
        v[station][0]
    } else {
        (v[station][t] - psi_v * v[station][t - 1]) / (1.0 - psi_v * psi_v).sqrt()
    }
}

/// Log-density of a latent path `v[station][cell]` under persistence
/// `psi_v` and innovation correlation `factor`.
pub(crate) fn latent_log_density(v: &[Vec<f64>], psi_v: f64, factor: &GpFactor) -> f64 {
    let n = v.len();
    let t_len = v.first().map_or(0, |r| r.len());
    if n == 0 || t_len == 0 {
        return 0.0;
    }
    if !(psi_v.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let mut w = vec![0.0; n];
    let mut quad = 0.0;
    for t in 0..t_len {
        for (s, ws) in w.iter_mut().enumerate() {
            *ws = innovation(v, psi_v, s, t);
        }
        quad += factor.quad_form(&w, 0.0);
    }
    let jac = (t_len - 1) as f64 * n as f64 * 0.5 * (1.0 - psi_v * psi_v).ln();
    -0.5 * quad - 0.5 * t_len as f64 * factor.log_det() - jac - (t_len * n) as f64 * LN_SQRT_2PI
}

/// Simulates a latent path of length `n_time` at the given stations.
pub fn simulate_latent<R: Rng + ?Sized>(
    psi_v: f64,
    psi_w: f64,
    locations: &[Location],
    n_time: usize,
    rng: &mut R,
) -> Result<LatentCopula> {
    let mut copula = LatentCopula {
        psi_v,
        psi_w,
        v: vec![vec![0.0; n_time]; locations.len()],
    };
    copula.validate()?;
    let factor = innovation_factor(locations, psi_w)?;
    let c = (1.0 - psi_v * psi_v).sqrt();
    for t in 0..n_time {
        let w = factor.sample(0.0, rng);
        for (s, ws) in w.iter().enumerate() {
            copula.v[s][t] = if t == 0 {
                *ws
            } else {
                psi_v * copula.v[s][t - 1] + c * ws
            };
        }
    }
    Ok(copula)
}
