//! Synthetic data generation and the with/without-`σ_d` comparison study.
//!
//! Series are generated from pilot quantile surfaces `q(κ | s, t)` at
//! `κ ∈ {0.25, 0.5, 0.75}`: a standard normal draw picks a piece and is
//! mapped through that piece's normal, and each day-of-year's spread is
//! then rescaled to a target standard deviation `σ_d`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{StationMeta, StationSeries, StudyWindow, Variable, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::math::norm_quantile;
use crate::mcmc::{posterior_mean_coeffs, run_chain, ChainConfig, FitData, LatentCopula};
use crate::quantile::{
    piecewise_params, trend_function, Covariates, KnotGrid, ModelForm, ModelSpec, QuantileCoeffs, Slot,
};
use crate::variance::{
    fit_variance_model, interannual_stats, predict_sigma, simulate_stats, VarianceFitOptions, VarianceParams,
};

/// Levels of the pilot quantiles and of the reported trends.
pub const KAPPA: [f64; 3] = [0.25, 0.5, 0.75];

/// Pilot quantiles of one station, `q(κ | s, t)` for each `κ` in [`KAPPA`]
/// at every cell of the study window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotQuantiles {
    pub q: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub stations: Vec<StationMeta>,
    pub window: StudyWindow,
    pub pilot: Vec<PilotQuantiles>,
    /// Target day-of-year standard deviation per station (365 values).
    pub target_sigma: Vec<Vec<f64>>,
    /// Trend of the pilot quantiles on normalized time, per station and
    /// level in [`KAPPA`].
    pub pilot_trend: Vec<[f64; 3]>,
    /// Trend of the marginal quantiles of the generated series, per station
    /// and level in [`KAPPA`]; see [`marginal_trend`].
    pub true_trend: Vec<[f64; 3]>,
    pub replicates: usize,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(
        stations: Vec<StationMeta>,
        window: StudyWindow,
        pilot: Vec<PilotQuantiles>,
        target_sigma: Vec<Vec<f64>>,
        replicates: usize,
        seed: u64,
    ) -> Result<Self> {
        let pilot_trend = pilot.iter().map(|p| trend_from_quantiles(&p.q)).collect();
        let mut s = SimScenario {
            stations,
            window,
            pilot,
            target_sigma,
            pilot_trend,
            true_trend: Vec::new(),
            replicates,
            seed,
        };
        s.validate()?;
        s.true_trend = (0..s.stations.len())
            .map(|st| marginal_trend(&s, st, TRUTH_DRAWS))
            .collect::<Result<_>>()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stations.len();
        if n == 0 || self.pilot.len() != n || self.target_sigma.len() != n {
            return Err(Error::Schema(format!(
                "{} stations, {} pilot surfaces, {} sigma profiles",
                n,
                self.pilot.len(),
                self.target_sigma.len()
            )));
        }
        if self.window.years() < 2 {
            return Err(Error::InsufficientData(
                "the variance correction needs at least two years per day of year".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        for (s, p) in self.pilot.iter().enumerate() {
            if p.q.len() != self.window.n_cells() {
                return Err(Error::Schema(format!(
                    "station {s}: {} pilot cells for a {}-cell window",
                    p.q.len(),
                    self.window.n_cells()
                )));
            }
            if let Some(c) = p.q.iter().position(|q| !(q[0] < q[1] && q[1] < q[2])) {
                return Err(Error::Domain(format!("station {s}: pilot quantiles not increasing at cell {c}")));
            }
        }
        for (s, sig) in self.target_sigma.iter().enumerate() {
            if sig.len() != DAYS_PER_YEAR || sig.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Domain(format!("station {s}: target sigma must be 365 positive values")));
            }
        }
        Ok(())
    }
}

/// Generator pieces `(a_l, σ_l)` for pilot quantiles `q` at the quartiles:
/// interior scales from the quartile gaps, outer pieces inheriting the
/// adjacent interior scale.
pub fn generator_pieces(q: &[f64; 3]) -> ([f64; 4], [f64; 4]) {
    let z = norm_quantile(0.75);
    let lower = (q[1] - q[0]) / z;
    let upper = (q[2] - q[1]) / z;
    let sigma = [lower, lower, upper, upper];
    let a = [q[0] + lower * z, q[1], q[1], q[2] - upper * z];
    (a, sigma)
}

/// Trend on normalized time of each pilot level: the slope of `q` on `t`
/// after removing a separate level for every day of year. Exact when the
/// surface is linear in `t` for each day.
pub fn trend_from_quantiles(q: &[[f64; 3]]) -> [f64; 3] {
    let n = q.len();
    let years = n / DAYS_PER_YEAR;
    let t = |cell: usize| cell as f64 / (n - 1) as f64;
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for d in 0..DAYS_PER_YEAR {
            let cells = (0..years).map(|y| y * DAYS_PER_YEAR + d);
            let tm = cells.clone().map(t).sum::<f64>() / years as f64;
            let qm = cells.clone().map(|c| q[c][k]).sum::<f64>() / years as f64;
            for c in cells {
                sxy += (t(c) - tm) * (q[c][k] - qm);
                sxx += (t(c) - tm) * (t(c) - tm);
            }
        }
        *o = sxy / sxx;
    }
    out
}

/// Monte Carlo draws per cell behind [`SimScenario::true_trend`].
pub const TRUTH_DRAWS: usize = 4000;

/// Stream index reserved for the truth computation.
const TRUTH_STREAM: u64 = 0xFFFF_FFFF;

/// Step 2 for one cell: the piece holding `x` maps it through that piece's
/// normal.
fn piece_map(q: &[f64; 3], x: f64) -> f64 {
    let zq = norm_quantile(0.25);
    let piece = [zq, 0.0, -zq].iter().take_while(|&&b| b <= x).count();
    let (a, sigma) = generator_pieces(q);
    a[piece] + sigma[piece] * x
}

/// Trend of the quantiles at [`KAPPA`] of the generated `y` at each cell,
/// taken over the generator's randomness.
///
/// The variance correction rescales with the sample sd of the very draws it
/// corrects, so `y`'s quantiles are not a fixed rescaling of the pilot
/// quantiles. For each day of year, `draws` independent sets of years are
/// generated and corrected; the quantiles across sets give every cell's
/// marginal quantiles, which are then regressed on time within days.
pub fn marginal_trend(scenario: &SimScenario, station: usize, draws: usize) -> Result<[f64; 3]> {
    let years = scenario.window.years();
    let pilot = &scenario.pilot[station].q;
    let mut rng = unit_rng(scenario.seed, TRUTH_STREAM, station as u64);
    let mut q = vec![[0.0; 3]; pilot.len()];
    let mut by_year = vec![vec![0.0; draws]; years];
    let mut y_star = vec![0.0; years];
    for d in 0..DAYS_PER_YEAR {
        let target = scenario.target_sigma[station][d];
        for r in 0..draws {
            for (j, v) in y_star.iter_mut().enumerate() {
                *v = piece_map(&pilot[j * DAYS_PER_YEAR + d], rng.sample(StandardNormal));
            }
            let m = crate::math::mean(&y_star);
            let sd = crate::math::sample_variance(&y_star).sqrt();
            for j in 0..years {
                by_year[j][r] = (y_star[j] - m) * target / sd + m;
            }
        }
        for (j, vals) in by_year.iter_mut().enumerate() {
            vals.sort_by(f64::total_cmp);
            let cell = &mut q[j * DAYS_PER_YEAR + d];
            for (k, &tau) in KAPPA.iter().enumerate() {
                cell[k] = crate::math::quantile_sorted(vals, tau);
            }
        }
    }
    Ok(trend_from_quantiles(&q))
}

/// Independent random stream for one unit of work.
fn unit_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((a << 32) | b);
    rng
}

fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    unit_rng(seed, a, b).random()
}

/// One generated replicate of one station.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSeries {
    pub series: StationSeries,
    /// Output of the piece-mapping step, before the variance correction.
    pub y_star: Vec<f64>,
    /// `σ_d / σ̂_d` applied on each day of year.
    pub scale_ratio: Vec<f64>,
}

/// Generates one station's series for one replicate:
/// 1. `X_t ~ N(0, 1)`;
/// 2. `y*_t = a_l + σ_l X_t` for the piece with `Φ⁻¹(κ_l) ≤ X_t < Φ⁻¹(κ_{l+1})`;
/// 3. `y_t = (y*_t − û_d) / σ̂_d · σ_d + û_d`, with `û_d` and `σ̂_d` the
///    day-of-year sample mean and standard deviation of `y*`.
pub fn generate_series(scenario: &SimScenario, station: usize, replicate: usize) -> Result<GeneratedSeries> {
    let mut rng = unit_rng(scenario.seed, replicate as u64 + 1, station as u64);
    let y_star: Vec<f64> = scenario.pilot[station]
        .q
        .iter()
        .map(|q| piece_map(q, rng.sample(StandardNormal)))
        .collect();
    let (y, scale_ratio) = correct_variance(&y_star, &scenario.target_sigma[station])?;
    let series = StationSeries::from_dense(
        scenario.stations[station].clone(),
        Variable::Dmx,
        scenario.window.start_year,
        &y,
    )?;
    Ok(GeneratedSeries {
        series,
        y_star,
        scale_ratio,
    })
}

/// Step 3: rescales each day of year's deviations from its sample mean so
/// that its sample standard deviation equals `target[d]`.
pub fn correct_variance(y_star: &[f64], target: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let years = y_star.len() / DAYS_PER_YEAR;
    if years < 2 || y_star.len() % DAYS_PER_YEAR != 0 {
        return Err(Error::InsufficientData(format!(
            "variance correction needs whole years and at least two of them, got {} cells",
            y_star.len()
        )));
    }
    let mut y = y_star.to_vec();
    let mut ratio = vec![0.0; DAYS_PER_YEAR];
    for d in 0..DAYS_PER_YEAR {
        let vals: Vec<f64> = (0..years).map(|j| y_star[j * DAYS_PER_YEAR + d]).collect();
        let m = crate::math::mean(&vals);
        let sd = crate::math::sample_variance(&vals).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("day {}: generated values have zero spread", d + 1)));
        }
        ratio[d] = target[d] / sd;
        for j in 0..years {
            let c = j * DAYS_PER_YEAR + d;
            y[c] = (y_star[c] - m) * ratio[d] + m;
        }
    }
    Ok((y, ratio))
}

/// Draws series directly from a quantile model: `y = q(u | s, t)` with
/// independent uniform levels, or levels from a latent copula path.
pub fn simulate_model_series<R: Rng + ?Sized>(
    spec: &ModelSpec,
    coeffs: &[QuantileCoeffs],
    stations: &[StationMeta],
    window: StudyWindow,
    sigma_d: &[Vec<f64>],
    copula: Option<&LatentCopula>,
    rng: &mut R,
) -> Result<Vec<StationSeries>> {
    if spec.use_soi {
        return Err(Error::Config("simulation does not generate an SOI covariate".into()));
    }
    let n_cells = window.n_cells();
    stations
        .iter()
        .enumerate()
        .map(|(s, meta)| {
            let y = (0..n_cells)
                .map(|cell| {
                    let u: f64 = match copula {
                        Some(c) => c.level(s, cell),
                        None => rng.random(),
                    };
                    let cov = cell_covariates(cell, n_cells, &sigma_d[s]);
                    Ok(piecewise_params(spec, &coeffs[s], &cov)?.quantile(u))
                })
                .collect::<Result<Vec<f64>>>()?;
            StationSeries::from_dense(meta.clone(), Variable::Dmx, window.start_year, &y)
        })
        .collect()
}

fn cell_covariates(cell: usize, n_cells: usize, sigma_d: &[f64]) -> Covariates {
    let d = cell % DAYS_PER_YEAR + 1;
    Covariates {
        t: cell as f64 / (n_cells - 1) as f64,
        d,
        soi: 0.0,
        sigma_d: sigma_d[d - 1],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pilot {
    /// Posterior-mean coefficients per station.
    pub coeffs: Vec<QuantileCoeffs>,
    pub quantiles: Vec<PilotQuantiles>,
}

/// Short chain on fit-ready data; the posterior-mean coefficients give the
/// pilot quantiles at every cell of the window.
pub fn pilot_run(data: &FitData, config: &ChainConfig) -> Result<Pilot> {
    if data.spec.use_soi {
        return Err(Error::Config("pilot runs do not use the SOI covariate".into()));
    }
    let out = run_chain(config, data)?;
    let coeffs = posterior_mean_coeffs(&out.samples)?;
    let quantiles = coeffs
        .iter()
        .zip(&data.stations)
        .map(|(c, st)| {
            let q = (0..data.n_cells)
                .map(|cell| {
                    let pq = piecewise_params(&data.spec, c, &cell_covariates(cell, data.n_cells, &st.sigma_d))?;
                    Ok([pq.quantile(KAPPA[0]), pq.quantile(KAPPA[1]), pq.quantile(KAPPA[2])])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PilotQuantiles { q })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pilot { coeffs, quantiles })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub station: String,
    pub tau: f64,
    /// Mean over replicates of the true trend.
    pub true_trend: f64,
    pub trend_no_sigma: f64,
    pub rmse_no_sigma: f64,
    pub trend_sigma: f64,
    pub rmse_sigma: f64,
    /// `rmse_no_sigma / rmse_sigma`; `None` when the denominator is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Sum of the row RMSEs of each model.
    pub total_rmse_no_sigma: f64,
    pub total_rmse_sigma: f64,
}

/// Estimates indexed `[replicate][station][level]`.
pub type Estimates = Vec<Vec<[f64; 3]>>;

impl ComparisonTable {
    pub fn from_estimates(ids: &[String], truth: &Estimates, no_sigma: &Estimates, sigma: &Estimates) -> Result<Self> {
        let reps = truth.len();
        if reps == 0 || no_sigma.len() != reps || sigma.len() != reps {
            return Err(Error::Schema("estimates must cover the same nonempty set of replicates".into()));
        }
        let mut rows = Vec::new();
        for (s, id) in ids.iter().enumerate() {
            for (k, &tau) in KAPPA.iter().enumerate() {
                let pick = |e: &Estimates| e.iter().map(|r| r[s][k]).collect::<Vec<f64>>();
                let (tr, no, wi) = (pick(truth), pick(no_sigma), pick(sigma));
                let rmse = |est: &[f64]| {
                    (est.iter().zip(&tr).map(|(e, t)| (e - t) * (e - t)).sum::<f64>() / reps as f64).sqrt()
                };
                let (r_no, r_wi) = (rmse(&no), rmse(&wi));
                rows.push(ComparisonRow {
                    station: id.clone(),
                    tau,
                    true_trend: crate::math::mean(&tr),
                    trend_no_sigma: crate::math::mean(&no),
                    rmse_no_sigma: r_no,
                    trend_sigma: crate::math::mean(&wi),
                    rmse_sigma: r_wi,
                    ratio: (r_wi > 0.0).then(|| r_no / r_wi),
                });
            }
        }
        Ok(ComparisonTable {
            total_rmse_no_sigma: rows.iter().map(|r| r.rmse_no_sigma).sum(),
            total_rmse_sigma: rows.iter().map(|r| r.rmse_sigma).sum(),
            rows,
        })
    }

    /// Rows where the model with `σ_d` has the strictly smaller RMSE.
    pub fn wins_with_sigma(&self) -> usize {
        self.rows.iter().filter(|r| r.rmse_sigma < r.rmse_no_sigma).count()
    }

    /// `station,tau,true_trend,trend_no_sigma,rmse_no_sigma,trend_sigma,rmse_sigma,ratio`,
    /// then a `total` row with the summed RMSEs. Undefined ratios are `NA`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "station",
            "tau",
            "true_trend",
            "trend_no_sigma",
            "rmse_no_sigma",
            "trend_sigma",
            "rmse_sigma",
            "ratio",
        ])?;
        let ratio = |r: Option<f64>| r.map_or_else(|| "NA".to_string(), |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.station.clone(),
                r.tau.to_string(),
                r.true_trend.to_string(),
                r.trend_no_sigma.to_string(),
                r.rmse_no_sigma.to_string(),
                r.trend_sigma.to_string(),
                r.rmse_sigma.to_string(),
                ratio(r.ratio),
            ])?;
        }
        let total_ratio = (self.total_rmse_sigma > 0.0).then(|| self.total_rmse_no_sigma / self.total_rmse_sigma);
        w.write_record([
            "total".to_string(),
            String::new(),
            String::new(),
            String::new(),
            self.total_rmse_no_sigma.to_string(),
            String::new(),
            self.total_rmse_sigma.to_string(),
            ratio(total_ratio),
        ])?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOptions {
    /// Fourier order of both fitted models.
    pub k: usize,
    pub chain: ChainConfig,
    pub variance: VarianceFitOptions,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        ComparisonOptions {
            k: 2,
            chain: ChainConfig {
                n_iter: 3000,
                n_burn: 1500,
                thin: 3,
                copula: false,
                ..ChainConfig::default()
            },
            variance: VarianceFitOptions::default(),
        }
    }
}

/// Model without `σ_d`: scales with intercept, trend and Fourier terms.
pub fn model_without_sigma(k: usize) -> ModelSpec {
    ModelSpec::new(ModelForm::Full, k, KnotGrid::default_four(), false)
}

/// Model with `σ_d`: scales driven by trend and the fitted `σ_d`.
pub fn model_with_sigma(k: usize) -> ModelSpec {
    ModelSpec::new(ModelForm::ReducedSigma, k, KnotGrid::default_four(), false)
}

fn trends_at_kappa(spec: &ModelSpec, coeffs: &[QuantileCoeffs]) -> Result<Vec<[f64; 3]>> {
    coeffs
        .iter()
        .map(|c| {
            Ok([
                trend_function(spec, c, KAPPA[0])?,
                trend_function(spec, c, KAPPA[1])?,
                trend_function(spec, c, KAPPA[2])?,
            ])
        })
        .collect()
}

/// Fits both models to every replicate and tabulates trend estimates at
/// [`KAPPA`] against [`SimScenario::true_trend`]. The model with `σ_d` uses
/// `σ_d` refitted from each replicate.
pub fn run_comparison(scenario: &SimScenario, opts: &ComparisonOptions) -> Result<ComparisonTable> {
    scenario.validate()?;
    let n = scenario.stations.len();
    let ids: Vec<String> = scenario.stations.iter().map(|m| m.station_id.clone()).collect();
    let (mut truth, mut est_no, mut est_with) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..scenario.replicates {
        let mut series = Vec::with_capacity(n);
        let mut rep_truth = Vec::with_capacity(n);
        let mut sigma_fit = Vec::with_capacity(n);
        for s in 0..n {
            let g = generate_series(scenario, s, r)?;
            rep_truth.push(scenario.true_trend[s]);
            let stats = interannual_stats(&g.series)?;
            let fit = fit_variance_model(&stats, &opts.variance)?;
            sigma_fit.push(predict_sigma(&fit.params, &stats));
            series.push(g.series);
        }
        let ones = vec![vec![1.0; DAYS_PER_YEAR]; n];
        let no_data = FitData::from_series(model_without_sigma(opts.k), &series, &ones, None, scenario.window)?;
        let with_data = FitData::from_series(model_with_sigma(opts.k), &series, &sigma_fit, None, scenario.window)?;
        let chain = |model: u64| ChainConfig {
            seed: derive_seed(scenario.seed, 1000 + r as u64, model),
            copula: false,
            ..opts.chain.clone()
        };
        let fit_no = run_chain(&chain(0), &no_data)?;
        let fit_with = run_chain(&chain(1), &with_data)?;
        est_no.push(trends_at_kappa(&no_data.spec, &posterior_mean_coeffs(&fit_no.samples)?)?);
        est_with.push(trends_at_kappa(&with_data.spec, &posterior_mean_coeffs(&fit_with.samples)?)?);
        truth.push(rep_truth);
    }
    ComparisonTable::from_estimates(&ids, &truth, &est_no, &est_with)
}

/// Settings for building a desk-scale scenario from synthetic stations.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskScenarioOptions {
    pub n_stations: usize,
    pub window: StudyWindow,
    pub replicates: usize,
    pub seed: u64,
    /// Fourier order of the pilot model.
    pub k: usize,
    pub pilot_chain: ChainConfig,
    /// Noise sd on the synthetic log-variance profile behind `σ_d`.
    pub log_noise_sd: f64,
    pub variance: VarianceFitOptions,
}

impl Default for DeskScenarioOptions {
    fn default() -> Self {
        DeskScenarioOptions {
            n_stations: 10,
            window: StudyWindow::new(2001, 2005),
            replicates: 20,
            seed: 2024,
            k: 2,
            pilot_chain: ChainConfig {
                n_iter: 2000,
                n_burn: 1000,
                thin: 2,
                copula: false,
                ..ChainConfig::default()
            },
            log_noise_sd: 0.1,
            variance: VarianceFitOptions::default(),
        }
    }
}

/// Synthetic stations spread over a continental-scale box.
pub fn synthetic_stations(n: usize) -> Vec<StationMeta> {
    (0..n)
        .map(|i| {
            let lat = -18.0 - 2.5 * (i % 5) as f64 - 0.7 * (i / 5) as f64;
            let lon = 116.0 + 3.3 * i as f64;
            StationMeta::new(format!("SIM{:02}", i + 1), lat, lon)
        })
        .collect()
}

/// Coefficients of the synthetic truth behind the pilot data: a warm
/// seasonal climate with station-specific trends and asymmetric scales that
/// widen in summer.
pub fn synthetic_truth(spec: &ModelSpec, station: usize) -> QuantileCoeffs {
    let s = station as f64;
    let mut c = spec.zero_coeffs();
    for (j, slot) in spec.beta_slots().iter().enumerate() {
        c.beta[j] = match slot {
            Slot::Intercept => 26.0 - 0.5 * (station % 5) as f64,
            Slot::Time => 0.3 + 0.08 * s,
            Slot::Cos(1) => 5.0 - 0.2 * (station % 3) as f64,
            Slot::Sin(1) => 0.8,
            Slot::Cos(2) => -0.4,
            Slot::Sin(2) => 0.3,
            _ => 0.0,
        };
    }
    let base = [2.6, 2.0, 1.7, 2.1];
    let trend = [0.25, 0.12, -0.05, 0.1];
    for (l, th) in c.theta.iter_mut().enumerate() {
        for (j, slot) in spec.theta_slots().iter().enumerate() {
            th[j] = match slot {
                Slot::Intercept => base[l] * (1.0 + 0.03 * s),
                Slot::Time => trend[l] * (1.0 + 0.1 * (station % 4) as f64),
                Slot::Cos(1) => 0.5,
                Slot::Sin(1) => 0.1,
                Slot::Sigma => base[l] / 2.0,
                _ => 0.0,
            };
        }
    }
    c
}

/// Variance-model parameters behind a station's target `σ_d`: variance
/// grows with the seasonal mean and has its own seasonal wiggle.
pub fn synthetic_variance_params(station: usize) -> VarianceParams {
    let mut p = VarianceParams::zeros(2);
    p.beta0 = -1.2 + 0.05 * (station % 3) as f64;
    p.beta1 = 0.1;
    p.fourier.a = vec![0.15, 0.05];
    p.fourier.b = vec![0.2, -0.1];
    p.rho1 = 0.05;
    p
}

/// Builds a scenario: synthetic pilot data, a pilot run, and target `σ_d`
/// from fitting the variance model to a noisy profile around each
/// station's pilot median.
pub fn desk_scenario(opts: &DeskScenarioOptions) -> Result<SimScenario> {
    let stations = synthetic_stations(opts.n_stations);
    let spec = model_without_sigma(opts.k);
    let truth: Vec<_> = (0..opts.n_stations).map(|s| synthetic_truth(&spec, s)).collect();
    let ones = vec![vec![1.0; DAYS_PER_YEAR]; opts.n_stations];
    let mut rng = unit_rng(opts.seed, 0, 0);
    let series = simulate_model_series(&spec, &truth, &stations, opts.window, &ones, None, &mut rng)?;
    let data = FitData::from_series(spec, &series, &ones, None, opts.window)?;
    let pilot_chain = ChainConfig {
        seed: derive_seed(opts.seed, 0, 1),
        ..opts.pilot_chain.clone()
    };
    let pilot = pilot_run(&data, &pilot_chain)?;
    let mut target = Vec::with_capacity(opts.n_stations);
    for (s, p) in pilot.quantiles.iter().enumerate() {
        let years = opts.window.years();
        let mu_hat: Vec<f64> = (0..DAYS_PER_YEAR)
            .map(|d| (0..years).map(|y| p.q[y * DAYS_PER_YEAR + d][1]).sum::<f64>() / years as f64)
            .collect();
        let stats = simulate_stats(&synthetic_variance_params(s), &mu_hat, years, opts.log_noise_sd, &mut rng)?;
        let fit = fit_variance_model(&stats, &opts.variance)?;
        target.push(predict_sigma(&fit.params, &stats));
    }
    SimScenario::new(stations, opts.window, pilot.quantiles, target, opts.replicates, opts.seed)
}
