//! Run configuration and the command drivers behind the `stqr` binary.
//!
//! Every command reads one flat `key = value` config file, writes plain CSV
//! or JSON under `output_dir`, and is byte-reproducible for a fixed seed.
//! Commands talk to each other only through those files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    filter_stations, load_covariate_csv, load_station_csv, missing_fraction, month_of_day, ExclusionReason,
    MissingBasis, SelectionRules, StationMeta, StationSeries, StudyWindow, Variable, DAYS_PER_YEAR,
};
use crate::error::{Error, Result};
use crate::exploratory::{fit_mean_model, heterogeneity_report, MeanModelOptions};
use crate::mcmc::{run_chain, trend_summary, write_samples_csv, ChainConfig, FitData};
use crate::quantile::{KnotGrid, ModelForm, ModelSpec};
use crate::sim::{desk_scenario, run_comparison, ComparisonOptions, DeskScenarioOptions};
use crate::variance::{fit_variance_model, interannual_stats, predict_sigma, VarianceFitOptions};

/// Trend on normalized time converted to °C per decade.
pub fn per_decade(trend_on_unit_time: f64, study_years: usize) -> f64 {
    trend_on_unit_time * 10.0 / study_years as f64
}

/// Inverse of [`per_decade`].
pub fn from_per_decade(trend_per_decade: f64, study_years: usize) -> f64 {
    trend_per_decade * study_years as f64 / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Season {
    #[default]
    All,
    /// December, January, February.
    Djf,
    /// June, July, August.
    Jja,
}

impl Season {
    pub fn contains_day(self, d: usize) -> bool {
        match self {
            Season::All => true,
            Season::Djf => matches!(month_of_day(d), 12 | 1 | 2),
            Season::Jja => matches!(month_of_day(d), 6..=8),
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Season::All => "",
            Season::Djf => "_djf",
            Season::Jja => "_jja",
        }
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(Season::All),
            "djf" | "summer" => Ok(Season::Djf),
            "jja" | "winter" => Ok(Season::Jja),
            _ => Err(Error::Config(format!("unknown season `{s}` (expected all, djf or jja)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory of per-station `station_id,date,value` files.
    pub data_dir: PathBuf,
    /// `station_id,lat,lon[,elevation,state]` file.
    pub metadata: PathBuf,
    pub soi: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub variable: Variable,
    pub window: StudyWindow,
    pub max_missing: f64,
    pub missing_basis: MissingBasis,
    pub require_span: bool,
    /// Restrict every command to these station ids.
    pub stations: Option<Vec<String>>,
    pub k: usize,
    pub pieces: usize,
    pub form: ModelForm,
    pub sigma_intercept: bool,
    pub use_soi: bool,
    pub season: Season,
    pub tau: Vec<f64>,
    pub chain: ChainConfig,
    pub max_lag: usize,
    pub ar_order: usize,
    pub variance_k: usize,
    pub trend_threshold: f64,
    pub sim_stations: usize,
    pub sim_years: usize,
    pub sim_replicates: usize,
    pub sim_k: usize,
    pub sim_pilot_iter: usize,
    pub sim_pilot_burn: usize,
    pub sim_iter: usize,
    pub sim_burn: usize,
    pub sim_thin: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = ComparisonOptions::default();
        let desk = DeskScenarioOptions::default();
        RunConfig {
            data_dir: PathBuf::from("data"),
            metadata: PathBuf::from("stations.csv"),
            soi: None,
            output_dir: PathBuf::from("out"),
            variable: Variable::Dmx,
            window: StudyWindow::default(),
            max_missing: 0.2,
            missing_basis: MissingBasis::StudyWindow,
            require_span: true,
            stations: None,
            k: crate::harmonics::DEFAULT_ORDER,
            pieces: 4,
            form: ModelForm::ReducedSigma,
            sigma_intercept: false,
            use_soi: false,
            season: Season::All,
            tau: vec![0.1, 0.5, 0.9],
            chain: ChainConfig::default(),
            max_lag: 800,
            ar_order: 1,
            variance_k: crate::harmonics::DEFAULT_ORDER,
            trend_threshold: 0.3,
            sim_stations: desk.n_stations,
            sim_years: desk.window.years(),
            sim_replicates: desk.replicates,
            sim_k: sim.k,
            sim_pilot_iter: desk.pilot_chain.n_iter,
            sim_pilot_burn: desk.pilot_chain.n_burn,
            sim_iter: sim.chain.n_iter,
            sim_burn: sim.chain.n_burn,
            sim_thin: sim.chain.thin,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub stations: Option<Vec<String>>,
    pub season: Option<Season>,
    pub tau: Option<Vec<f64>>,
    pub max_missing: Option<f64>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl RunConfig {
    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen = BTreeMap::new();
        let (mut start, mut end) = (c.window.start_year, c.window.end_year);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), i + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
            let path = || base.join(value);
            match key {
                "data_dir" => c.data_dir = path(),
                "metadata" => c.metadata = path(),
                "soi" => c.soi = Some(path()),
                "output_dir" => c.output_dir = path(),
                "variable" => c.variable = value.parse()?,
                "start_year" => start = parse_value(key, value)?,
                "end_year" => end = parse_value(key, value)?,
                "max_missing" => c.max_missing = parse_value(key, value)?,
                "missing_basis" => {
                    c.missing_basis = match value {
                        "window" => MissingBasis::StudyWindow,
                        "span" => MissingBasis::StationSpan,
                        _ => return Err(Error::Config(format!("invalid missing_basis `{value}` (window or span)"))),
                    }
                }
                "require_span" => c.require_span = parse_bool(key, value)?,
                "stations" => c.stations = Some(parse_list(key, value)?),
                "k" => c.k = parse_value(key, value)?,
                "pieces" => c.pieces = parse_value(key, value)?,
                "form" => {
                    c.form = match value {
                        "full" => ModelForm::Full,
                        "reduced" | "sigma" => ModelForm::ReducedSigma,
                        _ => return Err(Error::Config(format!("invalid form `{value}` (full or reduced)"))),
                    }
                }
                "sigma_intercept" => c.sigma_intercept = parse_bool(key, value)?,
                "use_soi" => c.use_soi = parse_bool(key, value)?,
                "season" => c.season = value.parse()?,
                "tau" => c.tau = parse_list(key, value)?,
                "n_iter" => c.chain.n_iter = parse_value(key, value)?,
                "n_burn" => c.chain.n_burn = parse_value(key, value)?,
                "thin" => c.chain.thin = parse_value(key, value)?,
                "seed" => c.chain.seed = parse_value(key, value)?,
                "target_accept" => c.chain.target_accept = parse_value(key, value)?,
                "proposal_scale" => c.chain.proposal_scale = parse_value(key, value)?,
                "copula" => c.chain.copula = parse_bool(key, value)?,
                "psi_v_init" => c.chain.psi_v_init = parse_value(key, value)?,
                "ci_level" => c.chain.ci_level = parse_value(key, value)?,
                "prior_mean_sd" => c.chain.hyper_prior.mean_sd = parse_value(key, value)?,
                "prior_sill_scale" => c.chain.hyper_prior.sill_scale = parse_value(key, value)?,
                "prior_range_min" => c.chain.hyper_prior.range_min = parse_value(key, value)?,
                "prior_range_max" => c.chain.hyper_prior.range_max = parse_value(key, value)?,
                "max_lag" => c.max_lag = parse_value(key, value)?,
                "ar_order" => c.ar_order = parse_value(key, value)?,
                "variance_k" => c.variance_k = parse_value(key, value)?,
                "trend_threshold" => c.trend_threshold = parse_value(key, value)?,
                "sim_stations" => c.sim_stations = parse_value(key, value)?,
                "sim_years" => c.sim_years = parse_value(key, value)?,
                "sim_replicates" => c.sim_replicates = parse_value(key, value)?,
                "sim_k" => c.sim_k = parse_value(key, value)?,
                "sim_pilot_iter" => c.sim_pilot_iter = parse_value(key, value)?,
                "sim_pilot_burn" => c.sim_pilot_burn = parse_value(key, value)?,
                "sim_iter" => c.sim_iter = parse_value(key, value)?,
                "sim_burn" => c.sim_burn = parse_value(key, value)?,
                "sim_thin" => c.sim_thin = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1))),
            }
        }
        if end < start {
            return Err(Error::Config(format!("end_year {end} before start_year {start}")));
        }
        c.window = StudyWindow::new(start, end);
        Ok(c)
    }

    /// Reads and validates a config file, then applies command-line values.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut c = RunConfig::parse(&text, base)?;
        if let Some(s) = overrides.seed {
            c.chain.seed = s;
        }
        if let Some(s) = &overrides.stations {
            c.stations = Some(s.clone());
        }
        if let Some(s) = overrides.season {
            c.season = s;
        }
        if let Some(t) = &overrides.tau {
            c.tau = t.clone();
        }
        if let Some(m) = overrides.max_missing {
            c.max_missing = m;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.max_missing) {
            return bad(format!("max_missing {} outside [0, 1]", self.max_missing));
        }
        KnotGrid::new(self.pieces).map_err(|e| Error::Config(e.to_string()))?;
        if self.use_soi && self.soi.is_none() {
            return bad("use_soi = true needs an `soi` file".into());
        }
        if self.max_lag == 0 {
            return bad("max_lag must be positive".into());
        }
        if !(self.trend_threshold.is_finite()) {
            return bad("trend_threshold must be finite".into());
        }
        if self.sim_years < 2 || self.sim_stations == 0 || self.sim_replicates == 0 {
            return bad("simulation needs at least 2 years, 1 station and 1 replicate".into());
        }
        if self.sim_pilot_burn >= self.sim_pilot_iter || self.sim_burn >= self.sim_iter || self.sim_thin == 0 {
            return bad("simulation chains need burn-in below the iteration count and positive thinning".into());
        }
        let chain = ChainConfig {
            tau_grid: self.tau.clone(),
            ..self.chain.clone()
        };
        chain.validate()
    }

    fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            tau_grid: self.tau.clone(),
            ..self.chain.clone()
        }
    }

    /// Model for the configured season. Seasonal fits use a first-order
    /// Fourier series within the season.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let grid = KnotGrid::new(self.pieces)?;
        let k = if self.season == Season::All { self.k } else { self.k.min(1) };
        Ok(ModelSpec::with_sigma_intercept(self.form, k, grid, self.use_soi, self.sigma_intercept))
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.output_dir.join(name);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn fit_dir_name(&self) -> String {
        format!("fit{}", self.season.suffix())
    }

    fn selected(&self, id: &str) -> bool {
        self.stations.as_ref().is_none_or(|s| s.iter().any(|x| x == id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Explore,
    FitVariance,
    Fit,
    Simulate,
    Report,
}

/// Process exit code for a failed command: 2 for configuration and input
/// path problems, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io { .. } => 2,
        _ => 1,
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Ingest => cmd_ingest(cfg).map(|_| ()),
        Command::Explore => cmd_explore(cfg),
        Command::FitVariance => cmd_fit_variance(cfg),
        Command::Fit => cmd_fit(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Report => cmd_report(cfg),
    }
}

/// One row of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub station_id: String,
    pub path: String,
    pub lat: f64,
    pub lon: f64,
    pub first_year: Option<i32>,
    pub last_year: Option<i32>,
    pub missing_frac: f64,
    /// `retained`, `too_many_missing` or `span_not_covered`.
    pub status: String,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing; run the earlier command first"),
        ));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads, calendar-normalizes and filters the station files, writing
/// `manifest.csv` with every station's missing fraction and span.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Vec<ManifestRow>> {
    let meta: BTreeMap<String, StationMeta> = crate::data::load_metadata_csv(&cfg.metadata)?
        .into_iter()
        .map(|m| (m.station_id.clone(), m))
        .collect();
    let entries = fs::read_dir(&cfg.data_dir).map_err(|e| Error::io(&cfg.data_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut series = Vec::new();
    let mut paths = BTreeMap::new();
    for f in &files {
        let mut s = load_station_csv(f, cfg.variable)?;
        if !cfg.selected(&s.meta.station_id) {
            continue;
        }
        s.meta = meta
            .get(&s.meta.station_id)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("{}: station `{}` has no metadata", f.display(), s.meta.station_id)))?;
        paths.insert(s.meta.station_id.clone(), f.display().to_string());
        series.push(s);
    }
    let rules = SelectionRules {
        max_missing_frac: cfg.max_missing,
        required_span: cfg.window,
        require_span: cfg.require_span,
        basis: cfg.missing_basis,
    };
    let row = |s: &StationSeries, status: &str| {
        let years = s.observed_years();
        ManifestRow {
            station_id: s.meta.station_id.clone(),
            path: paths[&s.meta.station_id].clone(),
            lat: s.meta.lat,
            lon: s.meta.lon,
            first_year: years.map(|y| y.0),
            last_year: years.map(|y| y.1),
            missing_frac: missing_fraction(s, cfg.window, cfg.missing_basis),
            status: status.to_string(),
        }
    };
    let by_id: BTreeMap<String, StationSeries> =
        series.iter().map(|s| (s.meta.station_id.clone(), s.clone())).collect();
    let outcome = filter_stations(series, &rules)?;
    let mut rows: Vec<ManifestRow> = outcome.retained.iter().map(|s| row(s, "retained")).collect();
    for (id, reason) in &outcome.excluded {
        let status = match reason {
            ExclusionReason::TooManyMissing { .. } => "too_many_missing",
            ExclusionReason::SpanNotCovered { .. } => "span_not_covered",
        };
        rows.push(row(&by_id[id], status));
    }
    rows.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    write_rows(&cfg.output_dir.join("manifest.csv"), &rows)?;
    let kept = rows.iter().filter(|r| r.status == "retained").count();
    log::info!("{kept} of {} stations retained", rows.len());
    if kept == 0 {
        return Err(Error::InsufficientData(format!(
            "no station passes the selection rules (max_missing {}, window {}-{})",
            cfg.max_missing, cfg.window.start_year, cfg.window.end_year
        )));
    }
    Ok(rows)
}

/// Retained stations from the manifest, restricted to the study window.
pub fn load_retained(cfg: &RunConfig) -> Result<Vec<StationSeries>> {
    let rows: Vec<ManifestRow> = read_rows(&cfg.output_dir.join("manifest.csv"))?;
    let series: Vec<StationSeries> = rows
        .iter()
        .filter(|r| r.status == "retained" && cfg.selected(&r.station_id))
        .map(|r| {
            let mut s = load_station_csv(Path::new(&r.path), cfg.variable)?;
            s.meta = StationMeta::new(r.station_id.clone(), r.lat, r.lon);
            Ok(s.restrict_to(cfg.window))
        })
        .collect::<Result<_>>()?;
    if series.is_empty() {
        return Err(Error::InsufficientData("no retained stations selected".into()));
    }
    Ok(series)
}

#[derive(Serialize)]
struct MeanModelSummary<'a> {
    station_id: &'a str,
    n_obs: usize,
    intercept: f64,
    trend: f64,
    trend_per_decade: f64,
    sin: &'a [f64],
    cos: &'a [f64],
    ar_coeffs: &'a [f64],
    sigma: f64,
    acf_band: f64,
    squared_within_band: f64,
}

/// Mean-model fit, residual ACFs and day-of-year statistics per station.
/// A failing station is logged and skipped.
pub fn cmd_explore(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.dir("explore")?;
    let opts = MeanModelOptions {
        k: cfg.k,
        p: cfg.ar_order,
        window: Some(cfg.window),
    };
    for s in load_retained(cfg)? {
        let id = s.meta.station_id.clone();
        let res = (|| -> Result<()> {
            let fit = fit_mean_model(&s, &[], &opts)?;
            let rep = heterogeneity_report(&fit, cfg.max_lag);
            rep.write_acf_csv(&dir.join(format!("{id}_acf.csv")))?;
            rep.write_day_variance_csv(&dir.join(format!("{id}_day_variance.csv")))?;
            let mut fitted = String::from("cell,day,observed,fitted,residual\n");
            for i in 0..fit.cells.len() {
                fitted.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fit.cells[i], fit.days[i], fit.observed[i], fit.fitted[i], fit.residuals[i]
                ));
            }
            let p = dir.join(format!("{id}_fit.csv"));
            fs::write(&p, fitted).map_err(|e| Error::io(&p, e))?;
            let stats = interannual_stats(&s)?;
            let mut day = String::from("d,mu_hat,var_hat,n_obs\n");
            for d in 0..DAYS_PER_YEAR {
                day.push_str(&format!("{},{},{},{}\n", d + 1, stats.mu_hat[d], stats.var_hat[d], stats.n_obs[d]));
            }
            let p = dir.join(format!("{id}_day_stats.csv"));
            fs::write(&p, day).map_err(|e| Error::io(&p, e))?;
            let summary = MeanModelSummary {
                station_id: &id,
                n_obs: fit.residuals.len(),
                intercept: fit.intercept,
                trend: fit.trend,
                trend_per_decade: per_decade(fit.trend, cfg.window.years()),
                sin: &fit.fourier.a,
                cos: &fit.fourier.b,
                ar_coeffs: &fit.ar_coeffs,
                sigma: fit.sigma,
                acf_band: rep.band,
                squared_within_band: rep.squared_within_band(),
            };
            write_json(&dir.join(format!("{id}_mean_model.json")), &summary)
        })();
        if let Err(e) = res {
            log::error!("station {id}: {e}");
        }
    }
    Ok(())
}

/// Seasonal log-variance fit per station; writes `{id}_sigma.csv` and
/// `{id}_params.json` under `variance/`.
pub fn cmd_fit_variance(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.dir("variance")?;
    let opts = VarianceFitOptions {
        k: cfg.variance_k,
        ..VarianceFitOptions::default()
    };
    for s in load_retained(cfg)? {
        let id = &s.meta.station_id;
        let stats = interannual_stats(&s)?;
        let fit = fit_variance_model(&stats, &opts)?;
        let sigma = predict_sigma(&fit.params, &stats);
        stats.write_csv(&sigma, &dir.join(format!("{id}_sigma.csv")))?;
        write_json(&dir.join(format!("{id}_params.json")), &fit.params)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SigmaRow {
    sigma_fit: f64,
}

fn read_sigma(cfg: &RunConfig, id: &str) -> Result<Vec<f64>> {
    let rows: Vec<SigmaRow> = read_rows(&cfg.output_dir.join("variance").join(format!("{id}_sigma.csv")))?;
    if rows.len() != DAYS_PER_YEAR {
        return Err(Error::Schema(format!("station {id}: sigma file has {} rows", rows.len())));
    }
    Ok(rows.into_iter().map(|r| r.sigma_fit).collect())
}

/// Description of a fit run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRun {
    pub start_year: i32,
    pub end_year: i32,
    pub study_years: usize,
    pub variable: Variable,
    pub season: Season,
    pub k: usize,
    pub pieces: usize,
    pub tau: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StationRow {
    station_id: String,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    station_id: String,
    tau: f64,
    g1_mean: f64,
    g1_lo: f64,
    g1_hi: f64,
}

/// Levels of the trend-curve files.
pub fn curve_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// Runs the sampler on the retained stations. Writes under `fit/` (or
/// `fit_djf/`, `fit_jja/`): `samples.csv`, `summary.csv`, `curves.csv`,
/// `blocks.csv`, `stations.csv` and `run.json`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let series = load_retained(cfg)?;
    let spec = cfg.model_spec()?;
    let sigma: Vec<Vec<f64>> = match spec.form {
        ModelForm::ReducedSigma => series.iter().map(|s| read_sigma(cfg, &s.meta.station_id)).collect::<Result<_>>()?,
        ModelForm::Full => vec![vec![1.0; DAYS_PER_YEAR]; series.len()],
    };
    let series: Vec<StationSeries> = series.iter().map(|s| s.mask_days(|d| cfg.season.contains_day(d))).collect();
    let soi = match (&cfg.soi, cfg.use_soi) {
        (Some(p), true) => Some(load_covariate_csv(p, "soi")?),
        _ => None,
    };
    let data = FitData::from_series(spec.clone(), &series, &sigma, soi.as_ref(), cfg.window)?;
    let chain = cfg.chain_config();
    let out = run_chain(&chain, &data)?;
    let dir = cfg.dir(&cfg.fit_dir_name())?;
    let ids: Vec<String> = series.iter().map(|s| s.meta.station_id.clone()).collect();
    write_samples_csv(&spec, &ids, &out.samples, &dir.join("samples.csv"))?;
    out.summary.write_csv(&dir.join("summary.csv"))?;
    write_rows(&dir.join("blocks.csv"), &out.summary.blocks)?;
    let grid = curve_grid();
    let mut curves = Vec::new();
    for (s, id) in ids.iter().enumerate() {
        for p in trend_summary(&spec, &out.samples, &grid, s, chain.ci_level)? {
            curves.push(CurveRow {
                station_id: id.clone(),
                tau: p.tau,
                g1_mean: p.mean,
                g1_lo: p.lo,
                g1_hi: p.hi,
            });
        }
    }
    write_rows(&dir.join("curves.csv"), &curves)?;
    let stations: Vec<StationRow> = series
        .iter()
        .map(|s| StationRow {
            station_id: s.meta.station_id.clone(),
            lat: s.meta.lat,
            lon: s.meta.lon,
        })
        .collect();
    write_rows(&dir.join("stations.csv"), &stations)?;
    let run = FitRun {
        start_year: cfg.window.start_year,
        end_year: cfg.window.end_year,
        study_years: cfg.window.years(),
        variable: cfg.variable,
        season: cfg.season,
        k: spec.k,
        pieces: cfg.pieces,
        tau: cfg.tau.clone(),
        n_samples: out.samples.len(),
        seed: chain.seed,
    };
    write_json(&dir.join("run.json"), &run)
}

/// Desk-scale simulation study; writes `sim/comparison.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let start = 2001;
    let desk = DeskScenarioOptions {
        n_stations: cfg.sim_stations,
        window: StudyWindow::new(start, start + cfg.sim_years as i32 - 1),
        replicates: cfg.sim_replicates,
        seed: cfg.chain.seed,
        k: cfg.sim_k,
        pilot_chain: ChainConfig {
            n_iter: cfg.sim_pilot_iter,
            n_burn: cfg.sim_pilot_burn,
            copula: false,
            hyper_prior: cfg.chain.hyper_prior,
            ..DeskScenarioOptions::default().pilot_chain
        },
        ..DeskScenarioOptions::default()
    };
    let scenario = desk_scenario(&desk)?;
    let opts = ComparisonOptions {
        k: cfg.sim_k,
        chain: ChainConfig {
            n_iter: cfg.sim_iter,
            n_burn: cfg.sim_burn,
            thin: cfg.sim_thin,
            copula: false,
            hyper_prior: cfg.chain.hyper_prior,
            ..ComparisonOptions::default().chain
        },
        ..ComparisonOptions::default()
    };
    let table = run_comparison(&scenario, &opts)?;
    let dir = cfg.dir("sim")?;
    table.write_csv(&dir.join("comparison.csv"))?;
    log::info!(
        "total RMSE without sigma {:.4}, with sigma {:.4}; with-sigma wins {} of {} rows",
        table.total_rmse_no_sigma,
        table.total_rmse_sigma,
        table.wins_with_sigma(),
        table.rows.len()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    station_id: String,
    tau: f64,
    g1_mean: f64,
    g1_lo: f64,
    g1_hi: f64,
}

/// One row of `trends_per_decade.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecadeRow {
    pub station_id: String,
    pub lat: f64,
    pub lon: f64,
    pub tau: f64,
    pub trend_per_decade: f64,
    pub lo_per_decade: f64,
    pub hi_per_decade: f64,
}

/// Stations whose trend curve exceeds `threshold` °C per decade at any level.
pub fn select_curves(curves: &[(String, f64)], threshold: f64) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (id, v) in curves {
        if *v > threshold && !out.contains(id) {
            out.push(id.clone());
        }
    }
    out
}

/// Per-decade tables and a GeoJSON layer from the outputs of one fit run.
/// Reads only the fit directory.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let fit_dir = cfg.output_dir.join(cfg.fit_dir_name());
    let run: FitRun = read_json(&fit_dir.join("run.json"))?;
    let stations: Vec<StationRow> = read_rows(&fit_dir.join("stations.csv"))?;
    let summary: Vec<SummaryRow> = read_rows(&fit_dir.join("summary.csv"))?;
    let curves: Vec<CurveRow> = read_rows(&fit_dir.join("curves.csv"))?;
    let loc: BTreeMap<&str, &StationRow> = stations.iter().map(|s| (s.station_id.as_str(), s)).collect();
    let years = run.study_years;
    let dir = cfg.dir(&format!("report{}", run.season.suffix()))?;

    let rows = summary
        .iter()
        .map(|r| {
            let st = loc
                .get(r.station_id.as_str())
                .ok_or_else(|| Error::Schema(format!("station `{}` missing from stations.csv", r.station_id)))?;
            Ok(DecadeRow {
                station_id: r.station_id.clone(),
                lat: st.lat,
                lon: st.lon,
                tau: r.tau,
                trend_per_decade: per_decade(r.g1_mean, years),
                lo_per_decade: per_decade(r.g1_lo, years),
                hi_per_decade: per_decade(r.g1_hi, years),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&dir.join("trends_per_decade.csv"), &rows)?;

    let features: Vec<serde_json::Value> = stations
        .iter()
        .map(|s| {
            let mut props = serde_json::Map::new();
            props.insert("station_id".into(), s.station_id.clone().into());
            for r in rows.iter().filter(|r| r.station_id == s.station_id) {
                props.insert(format!("trend_tau_{}", r.tau), r.trend_per_decade.into());
                props.insert(format!("lo_tau_{}", r.tau), r.lo_per_decade.into());
                props.insert(format!("hi_tau_{}", r.tau), r.hi_per_decade.into());
            }
            serde_json::json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [s.lon, s.lat] },
                "properties": props,
            })
        })
        .collect();
    let layer = serde_json::json!({ "type": "FeatureCollection", "features": features });
    write_json(&dir.join("trends.geojson"), &layer)?;

    let means: Vec<(String, f64)> = curves
        .iter()
        .map(|c| (c.station_id.clone(), per_decade(c.g1_mean, years)))
        .collect();
    let chosen = select_curves(&means, cfg.trend_threshold);
    let selected: Vec<CurveRow> = curves
        .iter()
        .filter(|c| chosen.contains(&c.station_id))
        .map(|c| CurveRow {
            station_id: c.station_id.clone(),
            tau: c.tau,
            g1_mean: per_decade(c.g1_mean, years),
            g1_lo: per_decade(c.g1_lo, years),
            g1_hi: per_decade(c.g1_hi, years),
        })
        .collect();
    let path = dir.join("curves_selected.csv");
    if selected.is_empty() {
        fs::write(&path, "station_id,tau,g1_mean,g1_lo,g1_hi\n").map_err(|e| Error::io(&path, e))?;
    } else {
        write_rows(&path, &selected)?;
    }
    Ok(())
}
