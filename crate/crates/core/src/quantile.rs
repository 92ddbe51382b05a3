//! Piecewise-Gaussian quantile process.
//!
//! The conditional quantile function at a covariate point is
//!
//! ```text
//! q(τ) = μ + Σ_l B_l(τ) σ_l
//! ```
//!
//! where `μ` is the median surface, `σ_l > 0` are piece scales and `B_l`
//! are basis functions built from the standard normal quantile `Φ⁻¹` on an
//! equally spaced knot grid `0 = κ_1 < … < κ_{L+1} = 1`. On each knot
//! interval the quantile function is `a_l + σ_l Φ⁻¹(τ)`, so the response
//! density is a union of `L` truncated normals each carrying mass `1/L`.
//!
//! Every basis function is continuous and vanishes at `τ = 0.5`: pieces
//! above the median are anchored at their lower knot `κ_l`, pieces below at
//! their upper knot `κ_{l+1}`. Hence `q(0.5) = μ` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{fill_design_row, fs_extrema};
use crate::math::{norm_cdf, norm_quantile, normal_logpdf, LN_SQRT_2PI};

/// Upper bound on the number of pieces, so hot paths can use stack buffers.
pub const MAX_PIECES: usize = 16;

/// Equally spaced knots on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    knots: Vec<f64>,
    /// `Φ⁻¹(κ_j)`, with `±∞` at the ends.
    z: Vec<f64>,
    /// Basis values at the interior knots, `(L - 1) × L` row-major.
    at_knots: Vec<f64>,
    /// Basis values at each piece's anchor level, `L × L` row-major.
    at_anchor: Vec<f64>,
    /// `Φ⁻¹` of each piece's anchor level.
    anchor_z: Vec<f64>,
}

impl KnotGrid {
    /// `L` pieces. `L` must be even so that 0.5 is a knot; `L = 1` gives the
    /// single-piece Gaussian configuration with `B_1(τ) = Φ⁻¹(τ)`.
    pub fn new(pieces: usize) -> Result<Self> {
        if pieces == 0 || pieces > MAX_PIECES || (pieces > 1 && pieces % 2 != 0) {
            return Err(Error::Domain(format!(
                "number of pieces must be 1 or an even number up to {MAX_PIECES}, got {pieces}"
            )));
        }
        let knots: Vec<f64> = (0..=pieces).map(|j| j as f64 / pieces as f64).collect();
        let z = knots.iter().map(|&k| norm_quantile(k)).collect();
        let mut grid = KnotGrid {
            knots,
            z,
            at_knots: Vec::new(),
            at_anchor: Vec::new(),
            anchor_z: Vec::new(),
        };
        let mut row = vec![0.0; pieces];
        for j in 1..pieces {
            grid.basis_into(grid.knots[j], &mut row);
            grid.at_knots.extend_from_slice(&row);
        }
        for l in 0..pieces {
            let tau = grid.anchor_level(l);
            grid.basis_into(tau, &mut row);
            grid.at_anchor.extend_from_slice(&row);
            grid.anchor_z.push(norm_quantile(tau));
        }
        Ok(grid)
    }

    /// Four pieces with knots {0, 0.25, 0.5, 0.75, 1}.
    pub fn default_four() -> Self {
        KnotGrid::new(4).expect("four pieces is valid")
    }

    pub fn pieces(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// 0-based piece for latent normal `v`, i.e. for `u = Φ(v)`, without
    /// evaluating `Φ`. Ties go to the right piece.
    #[inline]
    pub(crate) fn piece_of_normal(&self, v: f64) -> usize {
        let l = self.pieces();
        self.z[1..l].iter().take_while(|&&z| z <= v).count()
    }

    /// Level at which piece `l` (0-based) is pinned to the quantile curve.
    fn anchor_level(&self, l: usize) -> f64 {
        let (lo, hi) = (self.knots[l], self.knots[l + 1]);
        if hi <= 0.5 {
            hi
        } else if lo >= 0.5 {
            lo
        } else {
            0.5
        }
    }

    /// 0-based piece containing level `u`, using `κ_l ≤ u < κ_{l+1}`.
    pub fn piece_of_level(&self, u: f64) -> usize {
        let l = self.pieces();
        self.knots[1..l].iter().take_while(|&&k| k <= u).count()
    }

    /// Basis values without domain checks; `tau` must lie in (0, 1).
    pub(crate) fn basis_into(&self, tau: f64, out: &mut [f64]) {
        let l_count = self.pieces();
        if l_count == 1 {
            out[0] = norm_quantile(tau);
            return;
        }
        let zt = norm_quantile(tau);
        for l in 0..l_count {
            let (lo, hi) = (self.knots[l], self.knots[l + 1]);
            let (zlo, zhi) = (self.z[l], self.z[l + 1]);
            out[l] = if lo < 0.5 {
                if tau < lo {
                    zlo - zhi
                } else if tau < hi {
                    zt - zhi
                } else {
                    0.0
                }
            } else if tau < lo {
                0.0
            } else if tau < hi {
                zt - zlo
            } else {
                zhi - zlo
            };
        }
    }
}

/// Basis vector `(B_1(τ), …, B_L(τ))`.
pub fn basis_eval(tau: f64, grid: &KnotGrid) -> Result<Vec<f64>> {
    check_level(tau)?;
    let mut out = vec![0.0; grid.pieces()];
    grid.basis_into(tau, &mut out);
    Ok(out)
}

fn check_level(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelForm {
    /// Scales carry an intercept, trend, covariate and their own Fourier terms.
    Full,
    /// Scales are `θ_1 t + θ_2 x + θ_σ σ_d`, driven by the fitted seasonal
    /// standard deviation.
    ReducedSigma,
}

/// A regression slot: what a coefficient multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Intercept,
    Time,
    Soi,
    Sigma,
    Sin(usize),
    Cos(usize),
}

impl Slot {
    pub fn name(&self) -> String {
        match self {
            Slot::Intercept => "intercept".into(),
            Slot::Time => "t".into(),
            Slot::Soi => "soi".into(),
            Slot::Sigma => "sigma".into(),
            Slot::Sin(j) => format!("sin{j}"),
            Slot::Cos(j) => format!("cos{j}"),
        }
    }

    pub fn parse(s: &str) -> Option<Slot> {
        Some(match s {
            "intercept" => Slot::Intercept,
            "t" => Slot::Time,
            "soi" => Slot::Soi,
            "sigma" => Slot::Sigma,
            _ => {
                if let Some(j) = s.strip_prefix("sin") {
                    Slot::Sin(j.parse().ok()?)
                } else if let Some(j) = s.strip_prefix("cos") {
                    Slot::Cos(j.parse().ok()?)
                } else {
                    return None;
                }
            }
        })
    }

    fn value(&self, cov: &Covariates, fourier: &[f64]) -> f64 {
        let k = fourier.len() / 2;
        match *self {
            Slot::Intercept => 1.0,
            Slot::Time => cov.t,
            Slot::Soi => cov.soi,
            Slot::Sigma => cov.sigma_d,
            Slot::Sin(j) => fourier[j - 1],
            Slot::Cos(j) => fourier[k + j - 1],
        }
    }
}

/// Covariates at one (station, day) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    /// Normalized time in [0, 1].
    pub t: f64,
    /// Day of year 1..=365.
    pub d: usize,
    pub soi: f64,
    /// Fitted seasonal standard deviation for day `d`.
    pub sigma_d: f64,
}

impl Covariates {
    pub fn new(t: f64, d: usize) -> Self {
        Covariates {
            t,
            d,
            soi: 0.0,
            sigma_d: 1.0,
        }
    }
}

/// Structure of a quantile model: which slots the median surface and the
/// scales use.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub form: ModelForm,
    /// Fourier order of the seasonal terms.
    pub k: usize,
    pub grid: KnotGrid,
    pub use_soi: bool,
    /// Keep an intercept in the reduced-form scales.
    pub sigma_intercept: bool,
    beta_slots: Vec<Slot>,
    theta_slots: Vec<Slot>,
}

impl ModelSpec {
    pub fn new(form: ModelForm, k: usize, grid: KnotGrid, use_soi: bool) -> Self {
        Self::with_sigma_intercept(form, k, grid, use_soi, false)
    }

    pub fn with_sigma_intercept(
        form: ModelForm,
        k: usize,
        grid: KnotGrid,
        use_soi: bool,
        sigma_intercept: bool,
    ) -> Self {
        let fourier = (1..=k).map(Slot::Sin).chain((1..=k).map(Slot::Cos));
        let mut beta_slots = vec![Slot::Intercept, Slot::Time];
        if use_soi {
            beta_slots.push(Slot::Soi);
        }
        beta_slots.extend(fourier.clone());
        let theta_slots = match form {
            ModelForm::Full => beta_slots.clone(),
            ModelForm::ReducedSigma => {
                let mut s = Vec::new();
                if sigma_intercept {
                    s.push(Slot::Intercept);
                }
                s.push(Slot::Time);
                if use_soi {
                    s.push(Slot::Soi);
                }
                s.push(Slot::Sigma);
                s
            }
        };
        ModelSpec {
            form,
            k,
            grid,
            use_soi,
            sigma_intercept,
            beta_slots,
            theta_slots,
        }
    }

    pub fn pieces(&self) -> usize {
        self.grid.pieces()
    }

    pub fn beta_slots(&self) -> &[Slot] {
        &self.beta_slots
    }

    pub fn theta_slots(&self) -> &[Slot] {
        &self.theta_slots
    }

    pub fn beta_index(&self, slot: Slot) -> Option<usize> {
        self.beta_slots.iter().position(|&s| s == slot)
    }

    pub fn theta_index(&self, slot: Slot) -> Option<usize> {
        self.theta_slots.iter().position(|&s| s == slot)
    }

    pub fn fill_beta_row(&self, cov: &Covariates, out: &mut [f64]) {
        let mut fourier = [0.0; 64];
        let fourier = &mut fourier[..2 * self.k];
        fill_design_row(cov.d, fourier);
        for (o, s) in out.iter_mut().zip(&self.beta_slots) {
            *o = s.value(cov, fourier);
        }
    }

    pub fn fill_theta_row(&self, cov: &Covariates, out: &mut [f64]) {
        let mut fourier = [0.0; 64];
        let fourier = &mut fourier[..2 * self.k];
        fill_design_row(cov.d, fourier);
        for (o, s) in out.iter_mut().zip(&self.theta_slots) {
            *o = s.value(cov, fourier);
        }
    }

    /// A coefficient set of the right shape filled with zeros.
    pub fn zero_coeffs(&self) -> QuantileCoeffs {
        QuantileCoeffs {
            beta: vec![0.0; self.beta_slots.len()],
            theta: vec![vec![0.0; self.theta_slots.len()]; self.pieces()],
        }
    }
}

/// One station's coefficients: `beta` over the median-surface slots and
/// `theta[l]` over the scale slots of piece `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCoeffs {
    pub beta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Median surface `μ` at a covariate point.
pub fn median_surface(spec: &ModelSpec, coeffs: &QuantileCoeffs, cov: &Covariates) -> f64 {
    let mut row = vec![0.0; spec.beta_slots.len()];
    spec.fill_beta_row(cov, &mut row);
    dot(&row, &coeffs.beta)
}

/// Piece scales `σ_l` at a covariate point (not checked for positivity).
pub fn piece_scales(spec: &ModelSpec, coeffs: &QuantileCoeffs, cov: &Covariates) -> Vec<f64> {
    let mut row = vec![0.0; spec.theta_slots.len()];
    spec.fill_theta_row(cov, &mut row);
    coeffs.theta.iter().map(|th| dot(&row, th)).collect()
}

fn check_scales(sigma: &[f64]) -> Result<()> {
    match sigma.iter().position(|&s| !(s > 0.0)) {
        Some(l) => Err(Error::InvalidScale {
            piece: l + 1,
            value: sigma[l],
        }),
        None => Ok(()),
    }
}

/// `q(τ | s, t)` at a covariate point.
pub fn quantile_eval(spec: &ModelSpec, coeffs: &QuantileCoeffs, tau: f64, cov: &Covariates) -> Result<f64> {
    check_level(tau)?;
    let sigma = piece_scales(spec, coeffs, cov);
    check_scales(&sigma)?;
    let mu = median_surface(spec, coeffs, cov);
    let mut b = vec![0.0; spec.pieces()];
    spec.grid.basis_into(tau, &mut b);
    Ok(mu + dot(&b, &sigma))
}

/// Piecewise representation `q(τ) = a_l + σ_l Φ⁻¹(τ)` on `[κ_l, κ_{l+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseQuantile {
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `q(κ_j)` for every knot, with `-∞` and `+∞` at the ends.
    pub breaks: Vec<f64>,
    knots: Vec<f64>,
}

impl PiecewiseQuantile {
    /// Builds the representation from a median `mu` and positive scales.
    pub fn new(grid: &KnotGrid, mu: f64, sigma: &[f64]) -> Result<Self> {
        let l = grid.pieces();
        assert_eq!(sigma.len(), l, "one scale per piece");
        check_scales(sigma)?;
        let mut breaks = Vec::with_capacity(l + 1);
        breaks.push(f64::NEG_INFINITY);
        for j in 0..l - 1 {
            breaks.push(mu + dot(&grid.at_knots[j * l..(j + 1) * l], sigma));
        }
        breaks.push(f64::INFINITY);
        let a = (0..l)
            .map(|p| mu + dot(&grid.at_anchor[p * l..(p + 1) * l], sigma) - sigma[p] * grid.anchor_z[p])
            .collect();
        Ok(PiecewiseQuantile {
            a,
            sigma: sigma.to_vec(),
            breaks,
            knots: grid.knots.clone(),
        })
    }

    pub fn pieces(&self) -> usize {
        self.sigma.len()
    }

    /// 0-based piece `l` with `breaks[l] < y ≤ breaks[l+1]`.
    pub fn piece_of_value(&self, y: f64) -> usize {
        let l = self.pieces();
        self.breaks[1..l].iter().take_while(|&&b| b < y).count()
    }

    pub fn piece_of_level(&self, u: f64) -> usize {
        let l = self.pieces();
        self.knots[1..l].iter().take_while(|&&k| k <= u).count()
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        let p = self.piece_of_level(tau);
        self.a[p] + self.sigma[p] * norm_quantile(tau)
    }

    pub fn density(&self, y: f64) -> f64 {
        self.log_density(y).exp()
    }

    pub fn log_density(&self, y: f64) -> f64 {
        let p = self.piece_of_value(y);
        normal_logpdf(y, self.a[p], self.sigma[p])
    }

    /// CDF of the piecewise distribution.
    pub fn cdf(&self, y: f64) -> f64 {
        let p = self.piece_of_value(y);
        let inner = norm_cdf((y - self.a[p]) / self.sigma[p]);
        inner.clamp(self.knots[p], self.knots[p + 1])
    }

    /// Probability mass carried by piece `l` under its own normal.
    pub fn piece_mass(&self, l: usize) -> f64 {
        let hi = norm_cdf((self.breaks[l + 1] - self.a[l]) / self.sigma[l]);
        let lo = norm_cdf((self.breaks[l] - self.a[l]) / self.sigma[l]);
        hi - lo
    }
}

/// Piecewise parameters at a covariate point.
pub fn piecewise_params(spec: &ModelSpec, coeffs: &QuantileCoeffs, cov: &Covariates) -> Result<PiecewiseQuantile> {
    let sigma = piece_scales(spec, coeffs, cov);
    check_scales(&sigma)?;
    let mu = median_surface(spec, coeffs, cov);
    PiecewiseQuantile::new(&spec.grid, mu, &sigma)
}

/// Density of the response at `y`.
pub fn density_eval(pq: &PiecewiseQuantile, y: f64) -> f64 {
    pq.density(y)
}

/// `q(u)`, the response for latent uniform `u`. Ties at a knot go to the
/// piece on the right.
pub fn sample_one(pq: &PiecewiseQuantile, u: f64) -> f64 {
    pq.quantile(u)
}

/// Allocation-free log-density for hot loops: `mu` and `sigma` describe
/// the point, `y` the observation. Returns the piece index as well.
#[inline]
pub(crate) fn fast_log_density(grid: &KnotGrid, mu: f64, sigma: &[f64], y: f64) -> (f64, usize) {
    let l = sigma.len();
    let mut piece = 0;
    for j in 0..l - 1 {
        let b = mu + dot(&grid.at_knots[j * l..(j + 1) * l], sigma);
        if y > b {
            piece = j + 1;
        } else {
            break;
        }
    }
    (fast_piece_log_density(grid, mu, sigma, y, piece), piece)
}

/// Log-density of `y` under piece `piece`'s normal.
#[inline]
pub(crate) fn fast_piece_log_density(grid: &KnotGrid, mu: f64, sigma: &[f64], y: f64, piece: usize) -> f64 {
    let l = sigma.len();
    let s = sigma[piece];
    let a = mu + dot(&grid.at_anchor[piece * l..(piece + 1) * l], sigma) - s * grid.anchor_z[piece];
    let z = (y - a) / s;
    -0.5 * z * z - s.ln() - LN_SQRT_2PI
}

/// Covariate box over which scales must stay positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateRanges {
    pub t: (f64, f64),
    pub soi: (f64, f64),
    pub sigma_d: (f64, f64),
}

impl Default for CovariateRanges {
    fn default() -> Self {
        CovariateRanges {
            t: (0.0, 1.0),
            soi: (0.0, 0.0),
            sigma_d: (1.0, 1.0),
        }
    }
}

/// First point found where a scale is not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleWitness {
    /// 1-based piece index.
    pub piece: usize,
    pub t: f64,
    pub soi: f64,
    pub sigma_d: f64,
    /// Day of year of the Fourier minimum (full form only).
    pub d: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleCheck {
    Pass,
    Fail(ScaleWitness),
}

impl ScaleCheck {
    pub fn passed(&self) -> bool {
        matches!(self, ScaleCheck::Pass)
    }
}

/// Checks `σ_l > 0` on the whole covariate box. Scales are affine in
/// `(t, soi, σ_d)`, so the minimum sits at a box vertex; the seasonal part
/// of the full form is minimized over the 365 days separately.
pub fn check_positive_scales(spec: &ModelSpec, coeffs: &QuantileCoeffs, ranges: &CovariateRanges) -> ScaleCheck {
    for (l, th) in coeffs.theta.iter().enumerate() {
        if let Some(w) = min_scale_vertex(spec, th, ranges) {
            if !(w.value > 0.0) {
                return ScaleCheck::Fail(ScaleWitness { piece: l + 1, ..w });
            }
        }
    }
    ScaleCheck::Pass
}

/// Checks a single piece's scale coefficients.
pub(crate) fn piece_scale_positive(spec: &ModelSpec, theta: &[f64], ranges: &CovariateRanges) -> bool {
    min_scale_vertex(spec, theta, ranges).is_none_or(|w| w.value > 0.0)
}

fn min_scale_vertex(spec: &ModelSpec, theta: &[f64], ranges: &CovariateRanges) -> Option<ScaleWitness> {
    let mut seasonal_min = 0.0;
    let mut seasonal_day = None;
    let mut intercept = 0.0;
    let (mut ct, mut cs, mut cg) = (0.0, 0.0, 0.0);
    let mut fourier = Vec::new();
    for (s, &c) in spec.theta_slots.iter().zip(theta) {
        match s {
            Slot::Intercept => intercept = c,
            Slot::Time => ct = c,
            Slot::Soi => cs = c,
            Slot::Sigma => cg = c,
            Slot::Sin(_) | Slot::Cos(_) => fourier.push(c),
        }
    }
    if !fourier.is_empty() {
        let (lo, _) = fs_extrema(&fourier);
        seasonal_min = lo;
        seasonal_day = Some(argmin_day(&fourier));
    }
    let mut best: Option<ScaleWitness> = None;
    for &t in &[ranges.t.0, ranges.t.1] {
        for &soi in &[ranges.soi.0, ranges.soi.1] {
            for &g in &[ranges.sigma_d.0, ranges.sigma_d.1] {
                let v = intercept + ct * t + cs * soi + cg * g + seasonal_min;
                if best.is_none_or(|b| v < b.value) {
                    best = Some(ScaleWitness {
                        piece: 0,
                        t,
                        soi,
                        sigma_d: g,
                        d: seasonal_day,
                        value: v,
                    });
                }
            }
        }
    }
    best
}

fn argmin_day(coeffs: &[f64]) -> usize {
    let mut row = vec![0.0; coeffs.len()];
    let mut best = (f64::INFINITY, 1);
    for d in 1..=crate::data::DAYS_PER_YEAR {
        fill_design_row(d, &mut row);
        let v = dot(&row, coeffs);
        if v < best.0 {
            best = (v, d);
        }
    }
    best.1
}

/// Trend function `g_1(τ) = β_1 + Σ_l B_l(τ) θ_{1,l}`.
pub fn trend_function(spec: &ModelSpec, coeffs: &QuantileCoeffs, tau: f64) -> Result<f64> {
    check_level(tau)?;
    let bi = spec.beta_index(Slot::Time).expect("time slot always present");
    let ti = spec.theta_index(Slot::Time).expect("time slot always present");
    let mut b = vec![0.0; spec.pieces()];
    spec.grid.basis_into(tau, &mut b);
    Ok(coeffs.beta[bi] + coeffs.theta.iter().zip(&b).map(|(th, bl)| th[ti] * bl).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The basis as literally printed: upper pieces use `Φ⁻¹(τ) - Φ⁻¹(κ_{l+1})`.
    fn basis_uncorrected(tau: f64, grid: &KnotGrid) -> Vec<f64> {
        let mut out = vec![0.0; grid.pieces()];
        grid.basis_into(tau, &mut out);
        for l in 0..grid.pieces() {
            let (lo, hi) = (grid.knots[l], grid.knots[l + 1]);
            if lo >= 0.5 && tau >= lo && tau < hi {
                out[l] = norm_quantile(tau) - norm_quantile(hi);
            }
        }
        out
    }

    /// Branch table written out directly from the two-case definition.
    fn basis_oracle(tau: f64) -> [f64; 4] {
        let k = [0.0, 0.25, 0.5, 0.75, 1.0];
        let q = norm_quantile;
        let mut out = [0.0; 4];
        for l in 0..4 {
            out[l] = if k[l] < 0.5 {
                if tau < k[l] {
                    q(k[l]) - q(k[l + 1])
                } else if tau < k[l + 1] {
                    q(tau) - q(k[l + 1])
                } else {
                    0.0
                }
            } else if tau < k[l] {
                0.0
            } else if tau < k[l + 1] {
                q(tau) - q(k[l])
            } else {
                q(k[l + 1]) - q(k[l])
            };
        }
        out
    }

    #[test]
    fn grid_validation() {
        assert!(KnotGrid::new(0).is_err());
        assert!(KnotGrid::new(3).is_err());
        assert!(KnotGrid::new(1).is_ok());
        assert_eq!(KnotGrid::new(4).unwrap().knots(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn basis_vanishes_at_median() {
        let g = KnotGrid::default_four();
        assert_eq!(basis_eval(0.5, &g).unwrap(), vec![0.0; 4]);
        for eps in [1e-6, 1e-9] {
            for v in basis_eval(0.5 - eps, &g).unwrap().iter().chain(&basis_eval(0.5 + eps, &g).unwrap()) {
                assert!(v.abs() < 1e-5);
            }
        }
    }

    #[test]
    fn basis_matches_branch_table() {
        let g = KnotGrid::default_four();
        for i in 1..100 {
            let tau = i as f64 / 100.0;
            let got = basis_eval(tau, &g).unwrap();
            let want = basis_oracle(tau);
            for l in 0..4 {
                assert!((got[l] - want[l]).abs() < 1e-15, "tau={tau} l={l}");
            }
        }
        // τ = 0.1 sits in piece 1: only B_1 is active, B_2 is saturated.
        let b = basis_eval(0.1, &g).unwrap();
        assert!((b[0] - (norm_quantile(0.1) - norm_quantile(0.25))).abs() < 1e-15);
        assert!((b[0] + 0.607_061_8).abs() < 1e-6);
        assert!((b[1] - (norm_quantile(0.25) - norm_quantile(0.5))).abs() < 1e-15);
        assert_eq!(&b[2..], &[0.0, 0.0]);
    }

    #[test]
    fn basis_saturates_near_one() {
        let g = KnotGrid::default_four();
        let b = basis_eval(1.0 - 1e-12, &g).unwrap();
        assert_eq!(b[0], 0.0);
        assert_eq!(b[1], 0.0);
        assert!((b[2] - norm_quantile(0.75)).abs() < 1e-15);
        assert!(b[3] > 6.0);
        assert!(basis_eval(0.0, &g).is_err());
        assert!(basis_eval(1.0, &g).is_err());
    }

    #[test]
    fn uncorrected_basis_is_discontinuous() {
        let g = KnotGrid::default_four();
        let eps = 1e-10;
        let below = basis_uncorrected(0.75 - eps, &g);
        let above = basis_uncorrected(0.75 + eps, &g);
        // Piece 3 jumps at its own lower knot, and B_3(0.5) is not zero.
        assert!((below[2] - above[2]).abs() > 0.5);
        assert!(basis_uncorrected(0.5, &g)[2].abs() > 0.5);
        let below = basis_eval(0.75 - eps, &g).unwrap();
        let above = basis_eval(0.75 + eps, &g).unwrap();
        for l in 0..4 {
            assert!((below[l] - above[l]).abs() < 1e-8);
        }
    }

    fn reduced_spec() -> ModelSpec {
        ModelSpec::new(ModelForm::ReducedSigma, 4, KnotGrid::default_four(), true)
    }

    fn collapse_fixture() -> (ModelSpec, QuantileCoeffs, Covariates) {
        let spec = reduced_spec();
        let mut c = spec.zero_coeffs();
        let si = spec.theta_index(Slot::Sigma).unwrap();
        for th in &mut c.theta {
            th[si] = 1.0;
        }
        let cov = Covariates {
            t: 0.3,
            d: 45,
            soi: 0.7,
            sigma_d: 2.0,
        };
        (spec, c, cov)
    }

    #[test]
    fn single_scale_collapses_to_normal() {
        let (spec, c, cov) = collapse_fixture();
        for tau in [0.1, 0.3, 0.7, 0.9] {
            let q = quantile_eval(&spec, &c, tau, &cov).unwrap();
            assert!((q - 2.0 * norm_quantile(tau)).abs() < 1e-12);
        }
        let pq = piecewise_params(&spec, &c, &cov).unwrap();
        for l in 0..4 {
            assert!(pq.a[l].abs() < 1e-12);
            assert_eq!(pq.sigma[l], 2.0);
        }
        let want = 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((density_eval(&pq, 0.0) - want).abs() < 1e-15);
    }

    #[test]
    fn density_at_break_uses_piece_ending_there() {
        let g = KnotGrid::default_four();
        let pq = PiecewiseQuantile::new(&g, 1.0, &[0.5, 1.0, 2.0, 3.0]).unwrap();
        let b = pq.breaks[2];
        assert_eq!(pq.piece_of_value(b), 1);
        let want = normal_logpdf(b, pq.a[1], pq.sigma[1]);
        assert!(pq.log_density(b).is_finite());
        assert_eq!(pq.log_density(b), want);
        assert_eq!(pq.piece_of_value(b + 1e-12), 2);
    }

    #[test]
    fn sample_at_median_and_across_knots() {
        let g = KnotGrid::default_four();
        let pq = PiecewiseQuantile::new(&g, 3.0, &[0.5, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sample_one(&pq, 0.5), 3.0);
        for &k in &[0.25, 0.5, 0.75] {
            let lo = sample_one(&pq, k - 1e-12);
            let hi = sample_one(&pq, k + 1e-12);
            assert!((lo - hi).abs() < 1e-9);
            assert_eq!(pq.piece_of_level(k), g.piece_of_level(k));
        }
        assert_eq!(pq.piece_of_level(0.25), 1);
    }

    #[test]
    fn check_scales_examples() {
        let (spec, c, _) = collapse_fixture();
        let ranges = CovariateRanges {
            t: (0.0, 1.0),
            soi: (-2.0, 2.0),
            sigma_d: (0.5, 5.0),
        };
        assert!(check_positive_scales(&spec, &c, &ranges).passed());
        let mut bad = c.clone();
        let ti = spec.theta_index(Slot::Time).unwrap();
        bad.theta[2][ti] = -1.0;
        match check_positive_scales(&spec, &bad, &ranges) {
            ScaleCheck::Fail(w) => {
                assert_eq!(w.piece, 3);
                assert_eq!(w.t, 1.0);
            }
            ScaleCheck::Pass => panic!("expected failure"),
        }
        assert!(quantile_eval(&spec, &bad, 0.9, &Covariates { t: 1.0, ..Covariates::new(0.0, 1) }).is_err());
    }

    #[test]
    fn scale_check_agrees_with_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [
            reduced_spec(),
            ModelSpec::new(ModelForm::Full, 1, KnotGrid::new(2).unwrap(), true),
        ] {
            for _ in 0..20 {
                let mut c = spec.zero_coeffs();
                for th in &mut c.theta {
                    for v in th.iter_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                }
                let ranges = CovariateRanges {
                    t: (0.0, 1.0),
                    soi: (-1.5, 2.0),
                    sigma_d: (0.5, 3.0),
                };
                let affine = |th: &[f64], t: f64, soi: f64, g: f64| -> f64 {
                    spec.theta_slots()
                        .iter()
                        .zip(th)
                        .map(|(s, c)| {
                            c * match s {
                                Slot::Intercept => 1.0,
                                Slot::Time => t,
                                Slot::Soi => soi,
                                Slot::Sigma => g,
                                _ => 0.0,
                            }
                        })
                        .sum()
                };
                // Dense 100³ grid over (t, soi, σ_d); the seasonal part over every day.
                let mut grid_min = f64::INFINITY;
                for th in &c.theta {
                    let smin = (1..=365)
                        .map(|d| {
                            let mut row = vec![0.0; spec.theta_slots().len()];
                            spec.fill_theta_row(&Covariates { t: 0.0, d, soi: 0.0, sigma_d: 0.0 }, &mut row);
                            dot(&row, th) - affine(th, 0.0, 0.0, 0.0)
                        })
                        .fold(f64::INFINITY, f64::min);
                    for i in 0..100 {
                        for j in 0..100 {
                            for k in 0..100 {
                                let v = affine(
                                    th,
                                    i as f64 / 99.0,
                                    -1.5 + 3.5 * j as f64 / 99.0,
                                    0.5 + 2.5 * k as f64 / 99.0,
                                );
                                grid_min = grid_min.min(v + smin);
                            }
                        }
                    }
                }
                assert_eq!(check_positive_scales(&spec, &c, &ranges).passed(), grid_min > 0.0);
            }
        }
    }

    #[test]
    fn trend_at_median_is_beta_time() {
        let (spec, mut c, _) = collapse_fixture();
        let bi = spec.beta_index(Slot::Time).unwrap();
        let ti = spec.theta_index(Slot::Time).unwrap();
        c.beta[bi] = 0.8;
        for (l, th) in c.theta.iter_mut().enumerate() {
            th[ti] = 0.1 * l as f64;
        }
        assert_eq!(trend_function(&spec, &c, 0.5).unwrap(), 0.8);
        assert!(trend_function(&spec, &c, 0.9).unwrap() > 0.8);
    }

    #[test]
    fn gaussian_single_piece_matches_linear_scale_model() {
        // One piece with B_1 = Φ⁻¹: q = (β0 + β1 t) + (θ0 + θ1 t) Φ⁻¹(τ).
        let spec = ModelSpec::with_sigma_intercept(ModelForm::ReducedSigma, 1, KnotGrid::new(1).unwrap(), false, true);
        let mut c = spec.zero_coeffs();
        c.beta[spec.beta_index(Slot::Intercept).unwrap()] = 12.0;
        c.beta[spec.beta_index(Slot::Time).unwrap()] = 1.5;
        c.theta[0][spec.theta_index(Slot::Intercept).unwrap()] = 2.0;
        c.theta[0][spec.theta_index(Slot::Time).unwrap()] = 0.5;
        for &t in &[0.0, 0.4, 1.0] {
            let cov = Covariates { t, d: 200, soi: 0.0, sigma_d: 0.0 };
            let pq = piecewise_params(&spec, &c, &cov).unwrap();
            for i in 1..100 {
                let tau = i as f64 / 100.0;
                let want = 12.0 + 1.5 * t + (2.0 + 0.5 * t) * norm_quantile(tau);
                assert!((quantile_eval(&spec, &c, tau, &cov).unwrap() - want).abs() < 1e-10);
                assert!((pq.quantile(tau) - want).abs() < 1e-10);
            }
        }
    }

    fn random_pq(rng: &mut ChaCha8Rng, g: &KnotGrid) -> PiecewiseQuantile {
        let sigma: Vec<f64> = (0..g.pieces()).map(|_| rng.random_range(0.2..4.0)).collect();
        PiecewiseQuantile::new(g, rng.random_range(-20.0..30.0), &sigma).unwrap()
    }

    #[test]
    fn piece_mass_is_one_over_l() {
        let g = KnotGrid::default_four();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pq = random_pq(&mut rng, &g);
            for l in 0..4 {
                assert!((pq.piece_mass(l) - 0.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fast_paths_agree() {
        let g = KnotGrid::default_four();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pq = random_pq(&mut rng, &g);
            let mu = pq.quantile(0.5);
            let y = rng.random_range(-40.0..50.0);
            let (ll, p) = fast_log_density(&g, mu, &pq.sigma, y);
            assert_eq!(p, pq.piece_of_value(y));
            assert!((ll - pq.log_density(y)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn quantile_monotone_and_forms_agree(
            beta in proptest::collection::vec(-10.0f64..10.0, 11),
            theta in proptest::collection::vec(0.05f64..3.0, 12),
            t in 0.0f64..1.0,
            d in 1usize..=365,
            soi in 0.0f64..2.0,
            sigma_d in 0.5f64..4.0,
        ) {
            let spec = reduced_spec();
            let c = QuantileCoeffs { beta, theta: theta.chunks(3).map(|c| c.to_vec()).collect() };
            let cov = Covariates { t, d, soi, sigma_d };
            let pq = piecewise_params(&spec, &c, &cov).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 1..100 {
                let tau = i as f64 / 100.0;
                let q = quantile_eval(&spec, &c, tau, &cov).unwrap();
                prop_assert!(q >= prev);
                prop_assert!((pq.quantile(tau) - q).abs() < 1e-10 * (1.0 + q.abs()));
                prev = q;
            }
            prop_assert!(pq.breaks.windows(2).all(|w| w[0] <= w[1]));
            let mu = median_surface(&spec, &c, &cov);
            prop_assert_eq!(quantile_eval(&spec, &c, 0.5, &cov).unwrap(), mu);
        }
    }
}
