//! Truncated Fourier series in day-of-year with a 365-day period.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::DAYS_PER_YEAR;
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 4;

/// Sine (`a`) and cosine (`b`) coefficients of an order-`k` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierCoeffs {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::Domain(format!(
                "Fourier coefficient lengths {} and {} must match and be positive",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite Fourier coefficient".into()));
        }
        Ok(FourierCoeffs { a, b })
    }

    pub fn zeros(k: usize) -> Self {
        FourierCoeffs {
            a: vec![0.0; k],
            b: vec![0.0; k],
        }
    }

    /// Splits a `sin‖cos` slice of length `2k`.
    pub fn from_concat(v: &[f64]) -> Self {
        let k = v.len() / 2;
        FourierCoeffs {
            a: v[..k].to_vec(),
            b: v[k..].to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn concat(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }
}

fn check_day(d: usize) -> Result<()> {
    if (1..=DAYS_PER_YEAR).contains(&d) {
        Ok(())
    } else {
        Err(Error::Domain(format!("day of year {d} outside 1..=365")))
    }
}

/// `Σ_j a_j sin(2πjd/365) + b_j cos(2πjd/365)`.
pub fn fs_eval(d: usize, coeffs: &FourierCoeffs) -> Result<f64> {
    check_day(d)?;
    let w = 2.0 * PI * d as f64 / DAYS_PER_YEAR as f64;
    Ok(coeffs
        .a
        .iter()
        .zip(&coeffs.b)
        .enumerate()
        .map(|(j, (a, b))| {
            let x = (j + 1) as f64 * w;
            a * x.sin() + b * x.cos()
        })
        .sum())
}

/// Design row `[sin(2πd/365), …, sin(2πkd/365), cos(2πd/365), …, cos(2πkd/365)]`.
pub fn fs_design_row(d: usize, k: usize) -> Result<Vec<f64>> {
    check_day(d)?;
    let mut row = vec![0.0; 2 * k];
    fill_design_row(d, &mut row);
    Ok(row)
}

/// Writes the design row for `d` into `out` (length `2k`) without checks.
pub(crate) fn fill_design_row(d: usize, out: &mut [f64]) {
    let k = out.len() / 2;
    let w = 2.0 * PI * d as f64 / DAYS_PER_YEAR as f64;
    for j in 0..k {
        let x = (j + 1) as f64 * w;
        out[j] = x.sin();
        out[k + j] = x.cos();
    }
}

/// Minimum and maximum of a series over the 365 days.
pub fn fs_extrema(coeffs: &[f64]) -> (f64, f64) {
    let mut row = vec![0.0; coeffs.len()];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in 1..=DAYS_PER_YEAR {
        fill_design_row(d, &mut row);
        let v: f64 = row.iter().zip(coeffs).map(|(r, c)| r * c).sum();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
