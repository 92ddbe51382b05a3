//! Seasonal log-variance model for inter-annual day-of-year variability.
//!
//! `log σ²_d = β₀ + β₁ μ̂_d + β₂ μ̂_d² + FS(d) + ρ₁ (σ̂²_{d−1} − σ²_{d−1})`
//!
//! The innovation term runs around the year: day 1 looks back to day 365,
//! whose fitted variance is initialized at its sample value, so the first
//! innovation is zero.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{StationSeries, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::harmonics::{fill_design_row, FourierCoeffs, DEFAULT_ORDER};
use crate::lsq::least_squares;

/// Day-of-year mean and variance across years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAnnualStats {
    pub mu_hat: Vec<f64>,
    /// Unbiased sample variance; zero where fewer than two years contribute.
    pub var_hat: Vec<f64>,
    pub n_obs: Vec<usize>,
}

impl InterAnnualStats {
    /// Whether day `d` (1-based) has a usable sample variance.
    pub fn defined(&self, d: usize) -> bool {
        self.n_obs[d - 1] >= 2
    }

    pub fn n_defined(&self) -> usize {
        self.n_obs.iter().filter(|&&n| n >= 2).count()
    }

    pub fn write_csv(&self, sigma: &[f64], path: &Path) -> Result<()> {
        let mut out = String::from("d,mu_hat,var_hat,sigma_fit\n");
        for i in 0..DAYS_PER_YEAR {
            let var = if self.n_obs[i] >= 2 {
                self.var_hat[i].to_string()
            } else {
                "NA".to_string()
            };
            out.push_str(&format!("{},{},{},{}\n", i + 1, self.mu_hat[i], var, sigma[i]));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Per-day mean and unbiased variance over the observed years.
///
/// Values are sorted before summation so the result does not depend on the
/// order of years. Days with no observation at all get a mean interpolated
/// from the nearest observed days on either side.
pub fn interannual_stats(series: &StationSeries) -> Result<InterAnnualStats> {
    if series.years() < 2 {
        return Err(Error::InsufficientData(format!(
            "station {} spans {} year(s); need at least 2",
            series.meta.station_id,
            series.years()
        )));
    }
    let mut by_day: Vec<Vec<f64>> = vec![Vec::new(); DAYS_PER_YEAR];
    for (cell, v) in series.observed() {
        by_day[cell % DAYS_PER_YEAR].push(v);
    }
    let mut mu_hat = vec![f64::NAN; DAYS_PER_YEAR];
    let mut var_hat = vec![0.0; DAYS_PER_YEAR];
    let mut n_obs = vec![0; DAYS_PER_YEAR];
    for (i, vals) in by_day.iter_mut().enumerate() {
        vals.sort_by(f64::total_cmp);
        n_obs[i] = vals.len();
        if !vals.is_empty() {
            mu_hat[i] = crate::math::mean(vals);
        }
        if vals.len() >= 2 {
            var_hat[i] = crate::math::sample_variance(vals);
        }
    }
    let empty: Vec<usize> = (0..DAYS_PER_YEAR).filter(|&i| n_obs[i] == 0).collect();
    if empty.len() == DAYS_PER_YEAR {
        return Err(Error::InsufficientData(format!(
            "station {} has no observations",
            series.meta.station_id
        )));
    }
    if !empty.is_empty() {
        log::warn!(
            "station {}: {} day(s) of year never observed; mean interpolated",
            series.meta.station_id,
            empty.len()
        );
        let known = mu_hat.clone();
        for &i in &empty {
            let (mut back, mut fwd) = (1, 1);
            while known[(i + DAYS_PER_YEAR - back) % DAYS_PER_YEAR].is_nan() {
                back += 1;
            }
            while known[(i + fwd) % DAYS_PER_YEAR].is_nan() {
                fwd += 1;
            }
            let lo = known[(i + DAYS_PER_YEAR - back) % DAYS_PER_YEAR];
            let hi = known[(i + fwd) % DAYS_PER_YEAR];
            mu_hat[i] = lo + (hi - lo) * back as f64 / (back + fwd) as f64;
        }
    }
    Ok(InterAnnualStats { mu_hat, var_hat, n_obs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub fourier: FourierCoeffs,
    pub rho1: f64,
}

impl VarianceParams {
    pub fn zeros(k: usize) -> Self {
        VarianceParams {
            beta0: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            fourier: FourierCoeffs::zeros(k),
            rho1: 0.0,
        }
    }

    fn linear(&self) -> Vec<f64> {
        let mut v = vec![self.beta0, self.beta1, self.beta2];
        v.extend(self.fourier.concat());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFitOptions {
    pub k: usize,
    /// Sample variances of exactly zero are raised to this value before the
    /// log is taken; `None` turns them into an error instead.
    pub zero_floor: Option<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for VarianceFitOptions {
    fn default() -> Self {
        VarianceFitOptions {
            k: DEFAULT_ORDER,
            zero_floor: Some(1e-6),
            max_iterations: 500,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFit {
    pub params: VarianceParams,
    /// Sum of squared log-variance errors over the fit days.
    pub objective: f64,
    /// Objective after each update (linear step, ρ₁ search, joint step).
    pub history: Vec<f64>,
    /// Mean columns dropped for collinearity.
    pub dropped: Vec<String>,
    pub iterations: usize,
}

const RHO_BOUND: f64 = 0.99;
const RHO_GRID: usize = 198;
const PROFILE_STEPS: usize = 9;
const LOG_VAR_CAP: f64 = 700.0;

struct Problem {
    /// Design rows, one per day; dropped columns are zeroed.
    x: DMatrix<f64>,
    target: Vec<f64>,
    var_hat: Vec<f64>,
    fit: Vec<bool>,
    active: Vec<usize>,
    names: Vec<String>,
}

impl Problem {
    /// Log-variance path and optionally its Jacobian in the active columns.
    fn path(&self, lin: &[f64], rho: f64, jac: Option<&mut DMatrix<f64>>) -> Option<Vec<f64>> {
        let base = &self.x * nalgebra::DVector::from_column_slice(lin);
        let mut ell = vec![0.0f64; DAYS_PER_YEAR];
        let mut jac = jac;
        for i in 0..DAYS_PER_YEAR {
            // Day 1's predecessor is initialized at its sample value.
            let feed = i > 0 && self.fit[i - 1];
            let innov = if feed {
                self.var_hat[i - 1] - ell[i - 1].exp()
            } else {
                0.0
            };
            ell[i] = base[i] + rho * innov;
            if !ell[i].is_finite() || ell[i].abs() > LOG_VAR_CAP {
                return None;
            }
            if let Some(j) = jac.as_deref_mut() {
                let w = if feed { rho * ell[i - 1].exp() } else { 0.0 };
                for (c, &col) in self.active.iter().enumerate() {
                    j[(i, c)] = self.x[(i, col)] - if feed { w * j[(i - 1, c)] } else { 0.0 };
                }
                if j.ncols() > self.active.len() {
                    let c = self.active.len();
                    j[(i, c)] = innov - if feed { w * j[(i - 1, c)] } else { 0.0 };
                }
            }
        }
        Some(ell)
    }

    fn objective(&self, lin: &[f64], rho: f64) -> f64 {
        match self.path(lin, rho, None) {
            Some(ell) => (0..DAYS_PER_YEAR)
                .filter(|&i| self.fit[i])
                .map(|i| (self.target[i] - ell[i]).powi(2))
                .sum(),
            None => f64::INFINITY,
        }
    }

    /// One damped Gauss-Newton step on the linear coefficients, and on ρ₁ as
    /// well when `joint` is set. Returns the new objective and ρ₁.
    fn gauss_newton(&self, lin: &mut [f64], rho: f64, current: f64, joint: bool) -> Result<(f64, f64)> {
        let n_par = self.active.len() + usize::from(joint);
        let mut jac = DMatrix::<f64>::zeros(DAYS_PER_YEAR, n_par);
        let Some(ell) = self.path(lin, rho, Some(&mut jac)) else {
            return Ok((current, rho));
        };
        let rows: Vec<usize> = (0..DAYS_PER_YEAR).filter(|&i| self.fit[i]).collect();
        let j = DMatrix::from_fn(rows.len(), n_par, |r, c| jac[(rows[r], c)]);
        let resid: Vec<f64> = rows.iter().map(|&i| self.target[i] - ell[i]).collect();
        let mut names: Vec<String> = self.active.iter().map(|&c| self.names[c].clone()).collect();
        if joint {
            names.push("rho1".into());
        }
        let step = match least_squares(&j, &resid, &names) {
            Ok(step) => step,
            // A degenerate Jacobian (no information about ρ₁, or an unstable
            // recursion) ends the descent here.
            Err(Error::SingularDesign { .. }) => return Ok((current, rho)),
            Err(e) => return Err(e),
        };
        let mut scale = 1.0;
        for _ in 0..30 {
            let mut trial = lin.to_vec();
            for (c, &col) in self.active.iter().enumerate() {
                trial[col] += scale * step[c];
            }
            let trial_rho = if joint { rho + scale * step[n_par - 1] } else { rho };
            if trial_rho.abs() < RHO_BOUND {
                let obj = self.objective(&trial, trial_rho);
                if obj <= current {
                    lin.copy_from_slice(&trial);
                    return Ok((obj, trial_rho));
                }
            }
            scale *= 0.5;
        }
        Ok((current, rho))
    }

    /// Gauss-Newton on the linear coefficients at fixed ρ₁ until it stalls.
    fn converge_linear(&self, lin: &mut [f64], rho: f64) -> Result<f64> {
        let mut obj = self.objective(lin, rho);
        for _ in 0..25 {
            let (next, _) = self.gauss_newton(lin, rho, obj, false)?;
            let done = obj - next <= 1e-12 * obj;
            obj = next;
            if done {
                break;
            }
        }
        Ok(obj)
    }

    /// Grid search over ρ₁ followed by golden-section refinement. Keeps the
    /// current value unless a strictly better one is found.
    fn search_rho(&self, lin: &[f64], rho: f64, current: f64) -> (f64, f64) {
        let step = 2.0 * RHO_BOUND / RHO_GRID as f64;
        let grid: Vec<f64> = (0..=RHO_GRID).map(|i| -RHO_BOUND + i as f64 * step).collect();
        let vals: Vec<f64> = grid.iter().map(|&r| self.objective(lin, r)).collect();
        let (best, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let mut lo = grid[best.saturating_sub(1)];
        let mut hi = grid[(best + 1).min(RHO_GRID)];
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - g * (hi - lo);
        let mut b = lo + g * (hi - lo);
        let (mut fa, mut fb) = (self.objective(lin, a), self.objective(lin, b));
        for _ in 0..80 {
            if fa < fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - g * (hi - lo);
                fa = self.objective(lin, a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + g * (hi - lo);
                fb = self.objective(lin, b);
            }
        }
        let (cand, fc) = [(a, fa), (b, fb), (grid[best], vals[best])]
            .into_iter()
            .fold((rho, current), |acc, x| if x.1 < acc.1 { x } else { acc });
        (cand, fc)
    }
}

/// Least-squares fit of the log-variance model by alternating Gauss-Newton
/// updates of the linear coefficients with a 1-D search over ρ₁, each round
/// closed by a joint Gauss-Newton step. Every update is accepted only if it
/// does not increase the objective.
pub fn fit_variance_model(stats: &InterAnnualStats, opts: &VarianceFitOptions) -> Result<VarianceFit> {
    let k = opts.k;
    let n_cols = 3 + 2 * k;
    let fit: Vec<bool> = (1..=DAYS_PER_YEAR).map(|d| stats.defined(d)).collect();
    let n_fit = fit.iter().filter(|&&f| f).count();
    if n_fit < 2 * k + 4 {
        return Err(Error::InsufficientData(format!(
            "{n_fit} days with a defined variance; need at least {}",
            2 * k + 4
        )));
    }
    let mut target = vec![0.0; DAYS_PER_YEAR];
    let mut floored = 0;
    for i in 0..DAYS_PER_YEAR {
        if !fit[i] {
            continue;
        }
        let v = stats.var_hat[i];
        target[i] = if v > 0.0 {
            v.ln()
        } else {
            match opts.zero_floor {
                Some(f) => {
                    floored += 1;
                    f.ln()
                }
                None => return Err(Error::ZeroVariance { day: i + 1 }),
            }
        };
    }
    if floored > 0 {
        log::warn!("{floored} zero sample variance(s) floored at {:e}", opts.zero_floor.unwrap_or(0.0));
    }

    let mut names = vec!["intercept".to_string(), "mu".to_string(), "mu2".to_string()];
    names.extend((1..=k).map(|j| format!("sin{j}")));
    names.extend((1..=k).map(|j| format!("cos{j}")));
    let mut x = DMatrix::<f64>::zeros(DAYS_PER_YEAR, n_cols);
    let mut row = vec![0.0; 2 * k];
    for i in 0..DAYS_PER_YEAR {
        let m = stats.mu_hat[i];
        x[(i, 0)] = 1.0;
        x[(i, 1)] = m;
        x[(i, 2)] = m * m;
        fill_design_row(i + 1, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, 3 + j)] = *v;
        }
    }

    let mut problem = Problem {
        x,
        target,
        var_hat: stats.var_hat.clone(),
        fit,
        active: (0..n_cols).collect(),
        names,
    };

    // Initial linear fit at ρ₁ = 0, dropping collinear mean columns.
    let mut dropped = Vec::new();
    let mut lin = loop {
        let rows: Vec<usize> = (0..DAYS_PER_YEAR).filter(|&i| problem.fit[i]).collect();
        let design = DMatrix::from_fn(rows.len(), problem.active.len(), |r, c| {
            problem.x[(rows[r], problem.active[c])]
        });
        let y: Vec<f64> = rows.iter().map(|&i| problem.target[i]).collect();
        let names: Vec<String> = problem.active.iter().map(|&c| problem.names[c].clone()).collect();
        match least_squares(&design, &y, &names) {
            Ok(coef) => {
                let mut lin = vec![0.0; n_cols];
                for (c, &col) in problem.active.iter().enumerate() {
                    lin[col] = coef[c];
                }
                break lin;
            }
            Err(Error::SingularDesign { column, .. }) if column == "mu" || column == "mu2" => {
                log::warn!("mean column {column} is collinear with the other terms; dropped");
                let idx = problem.names.iter().position(|n| *n == column).expect("known column");
                problem.active.retain(|&c| c != idx);
                for i in 0..DAYS_PER_YEAR {
                    problem.x[(i, idx)] = 0.0;
                }
                dropped.push(column);
            }
            Err(e) => return Err(e),
        }
    };

    // Profile scan over ρ₁ to pick the starting basin; the objective is not
    // convex in (θ, ρ₁) jointly.
    let mut rho = 0.0;
    let mut obj = problem.converge_linear(&mut lin, rho)?;
    let start = lin.clone();
    for side in [-1.0, 1.0] {
        let mut warm = start.clone();
        for i in 1..=PROFILE_STEPS {
            let r = side * RHO_BOUND * i as f64 / (PROFILE_STEPS + 1) as f64;
            let o = problem.converge_linear(&mut warm, r)?;
            if o < obj {
                obj = o;
                rho = r;
                lin.copy_from_slice(&warm);
            }
        }
    }
    let mut history = vec![obj];
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let before = obj;
        (obj, _) = problem.gauss_newton(&mut lin, rho, obj, false)?;
        history.push(obj);
        let (r, o) = problem.search_rho(&lin, rho, obj);
        if o < obj {
            rho = r;
            obj = o;
        }
        history.push(obj);
        // A joint step resolves the slow zig-zag of the alternation when the
        // linear terms and ρ₁ are correlated.
        (obj, rho) = problem.gauss_newton(&mut lin, rho, obj, true)?;
        history.push(obj);
        if before - obj < opts.tolerance {
            break;
        }
    }

    // Negligible innovations carry no information about ρ₁.
    if let Some(ell) = problem.path(&lin, rho, None) {
        let (mut innov, mut scale) = (0.0, 0.0);
        for i in 1..DAYS_PER_YEAR {
            if problem.fit[i - 1] {
                innov += (problem.var_hat[i - 1] - ell[i - 1].exp()).powi(2);
                scale += problem.var_hat[i - 1].powi(2);
            }
        }
        if innov <= 1e-12 * scale {
            rho = 0.0;
            obj = problem.objective(&lin, rho);
        }
    }

    Ok(VarianceFit {
        params: VarianceParams {
            beta0: lin[0],
            beta1: lin[1],
            beta2: lin[2],
            fourier: FourierCoeffs::from_concat(&lin[3..]),
            rho1: rho,
        },
        objective: obj,
        history,
        dropped,
        iterations,
    })
}

/// Log-variance path for given parameters, with the innovation driven by the
/// sample variances in `stats`.
pub fn log_variance_path(params: &VarianceParams, stats: &InterAnnualStats) -> Vec<f64> {
    let k = params.fourier.order();
    let lin = params.linear();
    let mut row = vec![0.0; 2 * k];
    let mut ell: Vec<f64> = vec![0.0; DAYS_PER_YEAR];
    for i in 0..DAYS_PER_YEAR {
        let m = stats.mu_hat[i];
        fill_design_row(i + 1, &mut row);
        let mut v = lin[0] + lin[1] * m + lin[2] * m * m;
        v += row.iter().zip(&lin[3..]).map(|(a, b)| a * b).sum::<f64>();
        if i > 0 && stats.n_obs[i - 1] >= 2 {
            v += params.rho1 * (stats.var_hat[i - 1] - ell[i - 1].exp());
        }
        ell[i] = v.clamp(-LOG_VAR_CAP, LOG_VAR_CAP);
    }
    ell
}

/// Fitted standard deviation `σ_d = exp(½ log σ²_d)` for each day.
pub fn predict_sigma(params: &VarianceParams, stats: &InterAnnualStats) -> Vec<f64> {
    log_variance_path(params, stats)
        .into_iter()
        .map(|l| (0.5 * l).exp())
        .collect()
}

/// Generates day-of-year statistics from known parameters: each day's sample
/// log-variance is the model value plus Gaussian noise of sd `log_noise_sd`.
/// With zero noise the innovation term vanishes.
pub fn simulate_stats<R: Rng + ?Sized>(
    params: &VarianceParams,
    mu_hat: &[f64],
    n_years: usize,
    log_noise_sd: f64,
    rng: &mut R,
) -> Result<InterAnnualStats> {
    if mu_hat.len() != DAYS_PER_YEAR {
        return Err(Error::Domain(format!("mu_hat has length {}", mu_hat.len())));
    }
    let noise = Normal::new(0.0, log_noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
    let k = params.fourier.order();
    let lin = params.linear();
    let mut row = vec![0.0; 2 * k];
    let mut var_hat = vec![0.0; DAYS_PER_YEAR];
    let mut prev = (0.0, 0.0);
    for i in 0..DAYS_PER_YEAR {
        let m = mu_hat[i];
        fill_design_row(i + 1, &mut row);
        let mut ell = lin[0] + lin[1] * m + lin[2] * m * m;
        ell += row.iter().zip(&lin[3..]).map(|(a, b)| a * b).sum::<f64>();
        if i > 0 {
            ell += params.rho1 * (prev.0 - prev.1);
        }
        let sampled = ell + noise.sample(rng);
        var_hat[i] = sampled.exp();
        prev = (var_hat[i], ell.exp());
    }
    Ok(InterAnnualStats {
        mu_hat: mu_hat.to_vec(),
        var_hat,
        n_obs: vec![n_years; DAYS_PER_YEAR],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{StationMeta, Variable};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn mu_profile() -> Vec<f64> {
        (1..=365)
            .map(|d| {
                let w = 2.0 * PI * d as f64 / 365.0;
                22.0 + 7.0 * (w - 0.3).cos() + 0.8 * (7.0 * w).sin()
            })
            .collect()
    }

    fn truth(rho1: f64) -> VarianceParams {
        VarianceParams {
            beta0: 1.2,
            beta1: -0.08,
            beta2: 0.003,
            fourier: FourierCoeffs::new(vec![0.3, -0.1, 0.05, 0.02], vec![0.2, 0.08, -0.04, 0.03]).unwrap(),
            rho1,
        }
    }

    fn all_params(p: &VarianceParams) -> Vec<f64> {
        let mut v = p.linear();
        v.push(p.rho1);
        v
    }

    #[test]
    fn stats_examples() {
        let mut vals = vec![Some(5.0); 365 * 3];
        vals[10] = Some(10.0);
        vals[375] = Some(14.0);
        vals[740] = None;
        let s = StationSeries::from_cells(StationMeta::new("a", 0.0, 0.0), Variable::Dmx, 2000, vals).unwrap();
        let st = interannual_stats(&s).unwrap();
        assert_eq!(st.mu_hat[10], 12.0);
        assert_eq!(st.var_hat[10], 8.0);
        assert_eq!(st.n_obs[10], 2);
        assert_eq!(st.var_hat[0], 0.0);
        assert_eq!(st.mu_hat[0], 5.0);
        assert_eq!(st.n_obs[0], 3);
    }

    #[test]
    fn single_year_is_rejected() {
        let s = StationSeries::from_dense(StationMeta::new("a", 0.0, 0.0), Variable::Dmx, 2000, &[1.0; 365]).unwrap();
        assert!(matches!(interannual_stats(&s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn year_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let years: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..365).map(|_| rand::Rng::random::<f64>(&mut rng) * 30.0).collect())
            .collect();
        let build = |order: &[usize]| {
            let vals: Vec<f64> = order.iter().flat_map(|&y| years[y].clone()).collect();
            let s = StationSeries::from_dense(StationMeta::new("a", 0.0, 0.0), Variable::Dmx, 1990, &vals).unwrap();
            interannual_stats(&s).unwrap()
        };
        assert_eq!(build(&[0, 1, 2, 3, 4, 5]), build(&[4, 2, 5, 0, 3, 1]));
    }

    #[test]
    fn predict_closed_forms() {
        let stats = InterAnnualStats {
            mu_hat: mu_profile(),
            var_hat: vec![2.0; 365],
            n_obs: vec![10; 365],
        };
        let mut p = VarianceParams::zeros(4);
        assert!(predict_sigma(&p, &stats).iter().all(|&s| s == 1.0));
        p.beta0 = 2.0 * 3f64.ln();
        assert!(predict_sigma(&p, &stats).iter().all(|&s| (s - 3.0).abs() < 1e-12));
    }

    #[test]
    fn noiseless_recovery() {
        let p = truth(0.0);
        let stats = simulate_stats(&p, &mu_profile(), 30, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let fit = fit_variance_model(&stats, &VarianceFitOptions::default()).unwrap();
        for (a, b) in all_params(&fit.params).iter().zip(all_params(&p)) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        let want = predict_sigma(&p, &stats);
        let got = predict_sigma(&fit.params, &stats);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn noiseless_data_leaves_rho_unidentified() {
        // With σ̂² = σ² every innovation is zero, whatever ρ₁ generated it.
        let stats = simulate_stats(&truth(0.4), &mu_profile(), 30, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let fit = fit_variance_model(&stats, &VarianceFitOptions::default()).unwrap();
        assert_eq!(fit.params.rho1, 0.0);
        assert!((fit.params.beta0 - 1.2).abs() < 1e-4);
    }

    #[test]
    fn constant_inputs_drop_mean_columns() {
        let stats = InterAnnualStats {
            mu_hat: vec![18.0; 365],
            var_hat: vec![4.0; 365],
            n_obs: vec![20; 365],
        };
        let fit = fit_variance_model(&stats, &VarianceFitOptions::default()).unwrap();
        assert_eq!(fit.dropped, vec!["mu".to_string(), "mu2".to_string()]);
        assert!((fit.params.beta0 - 4f64.ln()).abs() < 1e-10);
        assert!(fit.params.fourier.concat().iter().all(|c| c.abs() < 1e-10));
        assert_eq!(fit.params.rho1, 0.0);
    }

    #[test]
    fn zero_variance_floor_or_error() {
        let mut stats = simulate_stats(&truth(0.0), &mu_profile(), 30, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        stats.var_hat[99] = 0.0;
        assert!(fit_variance_model(&stats, &VarianceFitOptions::default()).is_ok());
        let strict = VarianceFitOptions {
            zero_floor: None,
            ..Default::default()
        };
        assert!(matches!(
            fit_variance_model(&stats, &strict),
            Err(Error::ZeroVariance { day: 100 })
        ));
    }

    #[test]
    fn undefined_days_are_skipped() {
        let mut stats = simulate_stats(&truth(0.0), &mu_profile(), 30, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in (0..365).step_by(5) {
            stats.n_obs[i] = 1;
            stats.var_hat[i] = 0.0;
        }
        let fit = fit_variance_model(&stats, &VarianceFitOptions::default()).unwrap();
        assert!((fit.params.beta1 + 0.08).abs() < 1e-4);
        let mut few = stats.clone();
        few.n_obs = vec![1; 365];
        few.n_obs[..11].fill(5);
        assert!(matches!(
            fit_variance_model(&few, &VarianceFitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rho_zero_generator_gives_small_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sum = 0.0;
        for _ in 0..100 {
            let stats = simulate_stats(&truth(0.0), &mu_profile(), 30, 0.1, &mut rng).unwrap();
            let fit = fit_variance_model(&stats, &VarianceFitOptions::default()).unwrap();
            sum += fit.params.rho1;
        }
        assert!((sum / 100.0).abs() < 0.05, "{}", sum / 100.0);
    }

    #[test]
    fn objective_history_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let stats = simulate_stats(&truth(0.05), &mu_profile(), 30, 0.1, &mut rng).unwrap();
            let fit = fit_variance_model(&stats, &VarianceFitOptions::default()).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
            }
        }
    }

    proptest! {
        #[test]
        fn sigma_is_positive(b0 in -5.0..5.0f64, b1 in -0.2..0.2f64, b2 in -0.01..0.01f64,
                             f in proptest::collection::vec(-1.0..1.0f64, 8), rho in -0.99..0.99f64) {
            let p = VarianceParams {
                beta0: b0, beta1: b1, beta2: b2,
                fourier: FourierCoeffs::from_concat(&f),
                rho1: rho,
            };
            let stats = InterAnnualStats { mu_hat: mu_profile(), var_hat: vec![3.0; 365], n_obs: vec![10; 365] };
            prop_assert!(predict_sigma(&p, &stats).iter().all(|&s| s > 0.0 && s.is_finite()));
        }
    }
}
