//! Parametric mean model with autoregressive residuals, and the residual
//! diagnostics that expose seasonal heteroskedasticity.
//!
//! The mean model is intercept + linear trend in normalized time +
//! covariates + an order-`k` Fourier series. AR(p) terms are fitted by
//! iterated regression on lagged mean-model residuals until the
//! coefficients settle.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{CovariateSeries, StationSeries, StudyWindow, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::harmonics::{fill_design_row, FourierCoeffs};
use crate::lsq::least_squares;

const MAX_AR_ITERATIONS: usize = 50;
const AR_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanModelOptions {
    /// Fourier order.
    pub k: usize,
    /// AR order.
    pub p: usize,
    /// Normalization window for time; the series' own years when `None`.
    pub window: Option<StudyWindow>,
}

impl Default for MeanModelOptions {
    fn default() -> Self {
        MeanModelOptions {
            k: crate::harmonics::DEFAULT_ORDER,
            p: 1,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanModelFit {
    pub intercept: f64,
    /// °C per unit of normalized time.
    pub trend: f64,
    pub covariate_coeffs: Vec<f64>,
    pub fourier: FourierCoeffs,
    pub ar_coeffs: Vec<f64>,
    /// Observed values minus fitted values, one per observed day in time order.
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub observed: Vec<f64>,
    /// Day of year of each residual.
    pub days: Vec<usize>,
    /// Window cell index of each residual.
    pub cells: Vec<usize>,
    /// Residual standard deviation.
    pub sigma: f64,
    pub iterations: usize,
}

/// Least-squares fit of the mean model. Masked days are skipped; a lag that
/// falls on a masked day (or before the series) contributes zero.
pub fn fit_mean_model(
    series: &StationSeries,
    covariates: &[CovariateSeries],
    opts: &MeanModelOptions,
) -> Result<MeanModelFit> {
    let window = opts
        .window
        .unwrap_or(StudyWindow::new(series.start_year, series.end_year));
    let n_cells = window.n_cells();
    let aligned: Vec<Vec<f64>> = covariates
        .iter()
        .map(|c| c.aligned(window))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut y = Vec::new();
    let mut cell_value = vec![None; n_cells];
    for year in window.start_year..=window.end_year {
        for d in 1..=DAYS_PER_YEAR {
            if let Some(v) = series.get(year, d) {
                let c = (year - window.start_year) as usize * DAYS_PER_YEAR + d - 1;
                cells.push(c);
                y.push(v);
                cell_value[c] = Some(cells.len() - 1);
            }
        }
    }

    let mut names = vec!["intercept".to_string(), "t".to_string()];
    names.extend(covariates.iter().map(|c| c.name.clone()));
    names.extend((1..=opts.k).map(|j| format!("sin{j}")));
    names.extend((1..=opts.k).map(|j| format!("cos{j}")));
    let base_cols = names.len();
    let n_params = base_cols + opts.p;
    let n = y.len();
    if n < 10 * n_params {
        return Err(Error::InsufficientData(format!(
            "{n} observed days for {n_params} parameters (need at least {})",
            10 * n_params
        )));
    }

    let denom = (n_cells - 1) as f64;
    let mut base = DMatrix::<f64>::zeros(n, base_cols);
    let mut fourier = vec![0.0; 2 * opts.k];
    for (r, &c) in cells.iter().enumerate() {
        base[(r, 0)] = 1.0;
        base[(r, 1)] = c as f64 / denom;
        for (j, cov) in aligned.iter().enumerate() {
            base[(r, 2 + j)] = cov[c];
        }
        fill_design_row(c % DAYS_PER_YEAR + 1, &mut fourier);
        for (j, f) in fourier.iter().enumerate() {
            base[(r, 2 + aligned.len() + j)] = *f;
        }
    }

    let mut coef = least_squares(&base, &y, &names)?;
    let mut iterations = 1;
    let mut ar = vec![0.0; opts.p];
    let mean_resid = |coef: &[f64]| -> Vec<f64> {
        let fit = &base * nalgebra::DVector::from_column_slice(&coef[..base_cols]);
        y.iter().zip(fit.iter()).map(|(a, b)| a - b).collect()
    };
    let lag_matrix = |e: &[f64]| -> DMatrix<f64> {
        DMatrix::from_fn(n, opts.p, |r, i| {
            let lag = i + 1;
            cells[r]
                .checked_sub(lag)
                .and_then(|c| cell_value[c])
                .map_or(0.0, |idx| e[idx])
        })
    };

    let mut lags = DMatrix::<f64>::zeros(n, opts.p);
    if opts.p > 0 {
        let mut all_names = names.clone();
        all_names.extend((1..=opts.p).map(|i| format!("ar{i}")));
        loop {
            let e = mean_resid(&coef);
            lags = lag_matrix(&e);
            let mut x = DMatrix::<f64>::zeros(n, n_params);
            x.columns_mut(0, base_cols).copy_from(&base);
            x.columns_mut(base_cols, opts.p).copy_from(&lags);
            let next = least_squares(&x, &y, &all_names)?;
            let prev: Vec<f64> = coef[..base_cols].iter().chain(&ar).copied().collect();
            let change = next
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            coef = next[..base_cols].to_vec();
            ar = next[base_cols..].to_vec();
            iterations += 1;
            if change < AR_TOLERANCE || iterations > MAX_AR_ITERATIONS {
                break;
            }
        }
    }

    let det = &base * nalgebra::DVector::from_column_slice(&coef);
    let fitted: Vec<f64> = (0..n)
        .map(|r| det[r] + (0..opts.p).map(|i| ar[i] * lags[(r, i)]).sum::<f64>())
        .collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let sigma = crate::math::sample_variance(&residuals).sqrt();
    let nc = aligned.len();
    Ok(MeanModelFit {
        intercept: coef[0],
        trend: coef[1],
        covariate_coeffs: coef[2..2 + nc].to_vec(),
        fourier: FourierCoeffs::from_concat(&coef[2 + nc..]),
        ar_coeffs: ar,
        days: cells.iter().map(|c| c % DAYS_PER_YEAR + 1).collect(),
        cells,
        residuals,
        fitted,
        observed: y,
        sigma,
        iterations,
    })
}

/// Sample autocorrelation at lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() <= max_lag {
        return Err(Error::InsufficientData(format!(
            "series of length {} for max lag {max_lag}",
            x.len()
        )));
    }
    let m = crate::math::mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("zero-variance series has no autocorrelation".into()));
    }
    Ok((0..=max_lag)
        .map(|h| c.iter().zip(&c[h..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcfRow {
    pub lag: usize,
    pub acf_resid: f64,
    pub acf_resid_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayVarianceRow {
    pub d: usize,
    pub sample_var_resid: f64,
}

/// ACF of residuals and squared residuals, and per-day residual variance.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityReport {
    pub acf: Vec<AcfRow>,
    pub day_variance: Vec<DayVarianceRow>,
    /// Half-width of the approximate 95% band for white noise, `1.96/√n`.
    pub band: f64,
}

impl HeterogeneityReport {
    pub fn write_acf_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("lag,acf_resid,acf_resid_sq\n");
        for r in &self.acf {
            out.push_str(&format!("{},{},{}\n", r.lag, r.acf_resid, r.acf_resid_sq));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_day_variance_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("d,sample_var_resid\n");
        for r in &self.day_variance {
            out.push_str(&format!("{},{}\n", r.d, r.sample_var_resid));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Fraction of lags 1..=max inside the white-noise band for the squared
    /// residuals.
    pub fn squared_within_band(&self) -> f64 {
        let rows = &self.acf[1..];
        rows.iter().filter(|r| r.acf_resid_sq.abs() <= self.band).count() as f64 / rows.len() as f64
    }
}

/// Diagnostic tables for a fitted mean model. `max_lag` is clamped to the
/// residual count; a zero-variance residual series yields NaN columns.
pub fn heterogeneity_report(fit: &MeanModelFit, max_lag: usize) -> HeterogeneityReport {
    let n = fit.residuals.len();
    let max_lag = if n <= max_lag {
        log::warn!("max lag {max_lag} clamped to {}", n.saturating_sub(1));
        n.saturating_sub(1)
    } else {
        max_lag
    };
    let sq: Vec<f64> = fit.residuals.iter().map(|e| e * e).collect();
    let nan = || vec![f64::NAN; max_lag + 1];
    let a = acf(&fit.residuals, max_lag).unwrap_or_else(|_| nan());
    let b = acf(&sq, max_lag).unwrap_or_else(|_| nan());
    let acf_rows = (0..=max_lag)
        .map(|lag| AcfRow {
            lag,
            acf_resid: a[lag],
            acf_resid_sq: b[lag],
        })
        .collect();
    let mut by_day: Vec<Vec<f64>> = vec![Vec::new(); DAYS_PER_YEAR];
    for (e, d) in fit.residuals.iter().zip(&fit.days) {
        by_day[d - 1].push(*e);
    }
    let day_variance = by_day
        .iter()
        .enumerate()
        .map(|(i, v)| DayVarianceRow {
            d: i + 1,
            sample_var_resid: if v.len() >= 2 {
                crate::math::sample_variance(v)
            } else {
                f64::NAN
            },
        })
        .collect();
    HeterogeneityReport {
        acf: acf_rows,
        day_variance,
        band: 1.96 / (n as f64).sqrt(),
    }
}
