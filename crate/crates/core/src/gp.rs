//! Gaussian-process priors with exponential covariance
//! `C(s, s') = ψ² exp(-‖s - s'‖ / ρ)` over station coordinates.
//!
//! Distances are Euclidean in raw (lat, lon) degrees.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::LN_SQRT_2PI;

/// Relative nugget added to the diagonal for numerical stability.
pub const DEFAULT_NUGGET: f64 = 1e-8;

pub type Location = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyperParams {
    pub mean: f64,
    /// Sill ψ².
    pub sill: f64,
    /// Range ρ in degrees.
    pub range: f64,
}

impl GPHyperParams {
    pub fn new(mean: f64, sill: f64, range: f64) -> Result<Self> {
        let h = GPHyperParams { mean, sill, range };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sill > 0.0 && self.range > 0.0 && self.mean.is_finite()) {
            return Err(Error::Domain(format!(
                "GP hyperparameters need sill > 0 and range > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One coefficient per station together with its prior.
#[derive(Debug, Clone, PartialEq)]
pub struct GPField {
    pub values: Vec<f64>,
    pub hyper: GPHyperParams,
}

pub fn distance(a: &Location, b: &Location) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Correlation matrix `exp(-‖s_i - s_j‖ / ρ)` with unit sill.
pub fn exp_corr_matrix(locations: &[Location], range: f64) -> DMatrix<f64> {
    let n = locations.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (-distance(&locations[i], &locations[j]) / range).exp()
        }
    })
}

/// `ψ² exp(-‖s_i - s_j‖ / ρ) + nugget·1{i = j}`.
pub fn exp_cov_matrix(locations: &[Location], hyper: &GPHyperParams, nugget: f64) -> DMatrix<f64> {
    if nugget == 0.0 {
        for i in 0..locations.len() {
            for j in 0..i {
                if distance(&locations[i], &locations[j]) == 0.0 {
                    log::warn!("stations {j} and {i} share a location; covariance is singular");
                }
            }
        }
    }
    let mut c = exp_corr_matrix(locations, hyper.range) * hyper.sill;
    for i in 0..locations.len() {
        c[(i, i)] += nugget;
    }
    c
}

/// Cholesky factor of a covariance matrix with cached precision and log
/// determinant.
#[derive(Debug, Clone)]
pub struct GpFactor {
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    log_det: f64,
}

impl GpFactor {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::NotPositiveDefinite(format!("{n}×{n} covariance")))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(GpFactor {
            chol,
            precision,
            log_det,
        })
    }

    /// Factor of the exponential covariance with a relative nugget.
    pub fn exponential(locations: &[Location], sill: f64, range: f64) -> Result<Self> {
        let hyper = GPHyperParams {
            mean: 0.0,
            sill,
            range,
        };
        GpFactor::new(exp_cov_matrix(locations, &hyper, DEFAULT_NUGGET * sill))
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(x - m)ᵀ Σ⁻¹ (x - m)`.
    pub fn quad_form(&self, x: &[f64], mean: f64) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let di = x[i] - mean;
            let mut row = 0.0;
            for j in 0..n {
                row += self.precision[(i, j)] * (x[j] - mean);
            }
            acc += di * row;
        }
        acc
    }

    pub fn logpdf(&self, x: &[f64], mean: f64) -> f64 {
        -0.5 * self.quad_form(x, mean) - 0.5 * self.log_det - self.dim() as f64 * LN_SQRT_2PI
    }

    /// `mean + L z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = self.chol.l_dirty().lower_triangle() * z;
        x.iter().map(|v| v + mean).collect()
    }
}

/// Draws one field value per location.
pub fn gp_sample<R: Rng + ?Sized>(hyper: &GPHyperParams, locations: &[Location], rng: &mut R) -> Result<GPField> {
    hyper.validate()?;
    let factor = GpFactor::new(exp_cov_matrix(locations, hyper, DEFAULT_NUGGET * hyper.sill))?;
    Ok(GPField {
        values: factor.sample(hyper.mean, rng),
        hyper: *hyper,
    })
}

/// Exact multivariate normal log-density of a field.
pub fn gp_logpdf(field: &GPField, locations: &[Location]) -> Result<f64> {
    if field.values.len() != locations.len() {
        return Err(Error::Schema(format!(
            "{} field values for {} locations",
            field.values.len(),
            locations.len()
        )));
    }
    field.hyper.validate()?;
    let factor = GpFactor::exponential(locations, field.hyper.sill, field.hyper.range)?;
    Ok(factor.logpdf(&field.values, field.hyper.mean))
}

/// Weakly informative hyperpriors: mean ~ N(0, 100²), sill ~ half-normal
/// with scale 10, range ~ Uniform(0.1, 50) degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub mean_sd: f64,
    pub sill_scale: f64,
    pub range_min: f64,
    pub range_max: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior {
            mean_sd: 100.0,
            sill_scale: 10.0,
            range_min: 0.1,
            range_max: 50.0,
        }
    }
}

impl HyperPrior {
    pub fn log_mean(&self, m: f64) -> f64 {
        let z = m / self.mean_sd;
        -0.5 * z * z
    }

    pub fn log_sill(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = s / self.sill_scale;
        -0.5 * z * z
    }

    pub fn log_range(&self, r: f64) -> f64 {
        if r > self.range_min && r < self.range_max {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Median of the sill prior, `scale · Φ⁻¹(0.75)`.
    pub fn sill_median(&self) -> f64 {
        self.sill_scale * 0.674_489_750_196_081_7
    }

    pub fn range_median(&self) -> f64 {
        0.5 * (self.range_min + self.range_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_locations(rng: &mut ChaCha8Rng, n: usize) -> Vec<Location> {
        (0..n)
            .map(|_| [rng.random_range(-40.0..-10.0), rng.random_range(115.0..150.0)])
            .collect()
    }

    #[test]
    fn diagonal_and_closed_form_entry() {
        let h = GPHyperParams::new(0.0, 2.5, 3.0).unwrap();
        let locs = [[0.0, 0.0], [3.0, 0.0]];
        let c = exp_cov_matrix(&locs, &h, 0.1);
        assert_eq!(c[(0, 0)], 2.6);
        assert!((c[(0, 1)] - 2.5 / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn matches_elementwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let locs = random_locations(&mut rng, 5);
        let h = GPHyperParams::new(1.0, 1.7, 4.2).unwrap();
        let c = exp_cov_matrix(&locs, &h, 0.0);
        for i in 0..5 {
            for j in 0..5 {
                let dx = locs[i][0] - locs[j][0];
                let dy = locs[i][1] - locs[j][1];
                let want = 1.7 * (-(dx * dx + dy * dy).sqrt() / 4.2).exp();
                assert!((c[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn positive_definite_with_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let locs = random_locations(&mut rng, 8);
            let h = GPHyperParams::new(0.0, rng.random_range(0.1..5.0), rng.random_range(0.5..30.0)).unwrap();
            let c = exp_cov_matrix(&locs, &h, 1e-6);
            assert_eq!(c, c.transpose());
            let eig = c.symmetric_eigenvalues();
            assert!(eig.min() > 0.0);
        }
    }

    #[test]
    fn tiny_sill_gives_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let locs = random_locations(&mut rng, 4);
        let h = GPHyperParams::new(3.0, 1e-12, 5.0).unwrap();
        let f = gp_sample(&h, &locs, &mut rng).unwrap();
        assert!(f.values.iter().all(|v| (v - 3.0).abs() < 1e-5));
    }

    #[test]
    fn seeded_draws_reproduce() {
        let locs = [[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]];
        let h = GPHyperParams::new(0.0, 1.0, 2.0).unwrap();
        let a = gp_sample(&h, &locs, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = gp_sample(&h, &locs, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_station_is_scalar_normal() {
        let h = GPHyperParams::new(2.0, 4.0, 1.0).unwrap();
        let f = GPField { values: vec![3.0], hyper: h };
        let lp = gp_logpdf(&f, &[[0.0, 0.0]]).unwrap();
        let sd = (4.0f64 * (1.0 + DEFAULT_NUGGET)).sqrt();
        let want = crate::math::normal_logpdf(3.0, 2.0, sd);
        assert!((lp - want).abs() < 1e-12);
    }

    #[test]
    fn logpdf_decreases_along_ray() {
        let locs = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let h = GPHyperParams::new(1.0, 2.0, 1.5).unwrap();
        let dir = [0.3, -0.7, 0.2];
        let mut prev = f64::INFINITY;
        for step in 0..10 {
            let x: Vec<f64> = dir.iter().map(|d| 1.0 + step as f64 * d).collect();
            let lp = gp_logpdf(&GPField { values: x, hyper: h }, &locs).unwrap();
            assert!(lp < prev);
            prev = lp;
        }
    }

    #[test]
    fn translation_consistency() {
        let locs = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let h = GPHyperParams::new(1.0, 2.0, 1.5).unwrap();
        let x = vec![0.4, 1.9, 1.2];
        let a = gp_logpdf(&GPField { values: x.clone(), hyper: h }, &locs).unwrap();
        let shifted = GPField {
            values: x.iter().map(|v| v + 7.5).collect(),
            hyper: GPHyperParams { mean: 8.5, ..h },
        };
        assert!((gp_logpdf(&shifted, &locs).unwrap() - a).abs() < 1e-10);
    }

    #[test]
    fn duplicate_locations_fail_to_factor_without_nugget() {
        let h = GPHyperParams::new(0.0, 1.0, 1.0).unwrap();
        let locs = [[1.0, 1.0], [1.0, 1.0]];
        assert!(GpFactor::new(exp_cov_matrix(&locs, &h, 0.0)).is_err());
    }
}
