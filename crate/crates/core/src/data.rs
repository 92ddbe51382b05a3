//! Station data: CSV ingestion, the 365-day calendar, selection rules and
//! time normalization.
//!
//! Observations live on a fixed 365-day calendar. February 29 is dropped on
//! ingest, so every year has exactly 365 cells and the day after Feb 28 is
//! `d = 60` in every year. Missing values are masked, never imputed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: usize = 365;

const MONTH_STARTS: [usize; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];

/// Day of year on the 365-day calendar, or `None` for Feb 29.
pub fn day_of_year_365(date: NaiveDate) -> Option<usize> {
    let (m, d) = (date.month0() as usize, date.day() as usize);
    if m == 1 && d == 29 {
        return None;
    }
    Some(MONTH_STARTS[m] + d)
}

/// Calendar month (1..=12) of a day on the 365-day calendar.
pub fn month_of_day(d: usize) -> u32 {
    debug_assert!((1..=DAYS_PER_YEAR).contains(&d));
    MONTH_STARTS.iter().rposition(|&s| s < d).unwrap() as u32 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    /// Daily maximum temperature.
    Dmx,
    /// Daily minimum temperature.
    Dmn,
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::Dmx => "Dmx",
            Variable::Dmn => "Dmn",
        })
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dmx" | "tmax" => Ok(Variable::Dmx),
            "dmn" | "tmin" => Ok(Variable::Dmn),
            _ => Err(Error::Config(format!("unknown variable `{s}` (expected Dmx or Dmn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    /// Latitude in degrees.
    pub lat: f64,
    /// Longitude in degrees.
    pub lon: f64,
    pub elevation: Option<f64>,
    pub state: Option<String>,
}

impl StationMeta {
    pub fn new(station_id: impl Into<String>, lat: f64, lon: f64) -> Self {
        StationMeta {
            station_id: station_id.into(),
            lat,
            lon,
            elevation: None,
            state: None,
        }
    }

    pub fn location(&self) -> [f64; 2] {
        [self.lat, self.lon]
    }
}

/// A span of whole calendar years, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start_year: i32,
    pub end_year: i32,
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow {
            start_year: 1960,
            end_year: 2019,
        }
    }
}

impl StudyWindow {
    pub fn new(start_year: i32, end_year: i32) -> Self {
        assert!(end_year >= start_year, "study window ends before it starts");
        StudyWindow {
            start_year,
            end_year,
        }
    }

    pub fn years(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize
    }

    pub fn n_cells(&self) -> usize {
        self.years() * DAYS_PER_YEAR
    }
}

/// One station's daily observations, `years × 365` cells in row-major
/// (year, day) order. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub meta: StationMeta,
    pub variable: Variable,
    pub start_year: i32,
    pub end_year: i32,
    values: Vec<Option<f64>>,
    /// First and last in-range cells (flat indices), as delimited by the
    /// source file. Cells outside are always masked.
    span: (usize, usize),
}

impl StationSeries {
    /// Builds a series from a flat `years × 365` cell vector covering the
    /// whole year range.
    pub fn from_cells(
        meta: StationMeta,
        variable: Variable,
        start_year: i32,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if values.is_empty() || values.len() % DAYS_PER_YEAR != 0 {
            return Err(Error::Schema(format!(
                "{} cells is not a whole number of 365-day years",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| matches!(v, Some(x) if !x.is_finite())) {
            return Err(Error::Domain(format!("non-finite value at cell {i}")));
        }
        let years = values.len() / DAYS_PER_YEAR;
        let span = (0, values.len() - 1);
        Ok(StationSeries {
            meta,
            variable,
            start_year,
            end_year: start_year + years as i32 - 1,
            values,
            span,
        })
    }

    /// Builds a series from a dense `years × 365` matrix of observed values.
    pub fn from_dense(
        meta: StationMeta,
        variable: Variable,
        start_year: i32,
        values: &[f64],
    ) -> Result<Self> {
        Self::from_cells(meta, variable, start_year, values.iter().map(|&v| Some(v)).collect())
    }

    pub fn years(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    /// Flat cell index of `(year, d)`, `d` in `1..=365`.
    pub fn cell(&self, year: i32, d: usize) -> Option<usize> {
        if year < self.start_year || year > self.end_year || !(1..=DAYS_PER_YEAR).contains(&d) {
            return None;
        }
        Some((year - self.start_year) as usize * DAYS_PER_YEAR + d - 1)
    }

    pub fn get(&self, year: i32, d: usize) -> Option<f64> {
        self.cell(year, d).and_then(|c| self.values[c])
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.values
    }

    /// `(year, d)` for a flat cell index.
    pub fn year_day(&self, cell: usize) -> (i32, usize) {
        (
            self.start_year + (cell / DAYS_PER_YEAR) as i32,
            cell % DAYS_PER_YEAR + 1,
        )
    }

    pub fn span(&self) -> (usize, usize) {
        self.span
    }

    pub fn n_observed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn n_masked(&self) -> usize {
        self.values.len() - self.n_observed()
    }

    /// Observed `(cell, value)` pairs in time order.
    pub fn observed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (i, x)))
    }

    /// Years of the first and last observed values.
    pub fn observed_years(&self) -> Option<(i32, i32)> {
        let first = self.values.iter().position(|v| v.is_some())?;
        let last = self.values.iter().rposition(|v| v.is_some())?;
        Some((self.year_day(first).0, self.year_day(last).0))
    }

    /// Value at `(year, d)` if the cell falls inside this series, observed or not.
    fn value_in_window(&self, year: i32, d: usize) -> Option<f64> {
        self.get(year, d)
    }

    /// Copy of this series restricted (or padded with masked cells) to `window`.
    pub fn restrict_to(&self, window: StudyWindow) -> StationSeries {
        let mut values = Vec::with_capacity(window.n_cells());
        for year in window.start_year..=window.end_year {
            for d in 1..=DAYS_PER_YEAR {
                values.push(self.value_in_window(year, d));
            }
        }
        let span = (0, values.len() - 1);
        StationSeries {
            meta: self.meta.clone(),
            variable: self.variable,
            start_year: window.start_year,
            end_year: window.end_year,
            values,
            span,
        }
    }

    /// Masks every cell for which `keep(d)` is false.
    pub fn mask_days(&self, keep: impl Fn(usize) -> bool) -> StationSeries {
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if !keep(i % DAYS_PER_YEAR + 1) {
                *v = None;
            }
        }
        out
    }
}

/// A daily record as read from a file, before calendar normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub value: Option<f64>,
}

/// Daily records of one station in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub station_id: String,
    pub records: Vec<DailyRecord>,
}

/// Removes February 29 records. Idempotent.
pub fn drop_leap_days(raw: RawSeries) -> RawSeries {
    RawSeries {
        station_id: raw.station_id,
        records: raw
            .records
            .into_iter()
            .filter(|r| day_of_year_365(r.date).is_some())
            .collect(),
    }
}

/// Places leap-free records on the 365-day grid. The in-range span runs
/// from the earliest to the latest record date.
pub fn assemble_series(raw: &RawSeries, meta: StationMeta, variable: Variable) -> Result<StationSeries> {
    let (Some(first), Some(last)) = (
        raw.records.iter().map(|r| r.date).min(),
        raw.records.iter().map(|r| r.date).max(),
    ) else {
        return Err(Error::Schema(format!("station {} has no records", raw.station_id)));
    };
    let start_year = first.year();
    let end_year = last.year();
    let years = (end_year - start_year + 1) as usize;
    let mut values = vec![None; years * DAYS_PER_YEAR];
    let flat = |date: NaiveDate| {
        day_of_year_365(date).map(|d| (date.year() - start_year) as usize * DAYS_PER_YEAR + d - 1)
    };
    for r in &raw.records {
        let Some(c) = flat(r.date) else { continue };
        if let Some(v) = r.value {
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value on {}", r.date)));
            }
            values[c] = Some(v);
        }
    }
    // Feb 29 bounds fall back to the neighbouring day.
    let lo = flat(first).unwrap_or_else(|| flat(first.succ_opt().unwrap()).unwrap());
    let hi = flat(last).unwrap_or_else(|| flat(last.pred_opt().unwrap()).unwrap());
    Ok(StationSeries {
        meta,
        variable,
        start_year,
        end_year,
        values,
        span: (lo, hi),
    })
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_opt_f64(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| format!("bad number `{s}`: {e}"))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Reads `station_id,date,value` rows of a single station.
pub fn read_raw_series(path: &Path) -> Result<RawSeries> {
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &["station_id", "date", "value"])?;
    let mut station_id: Option<String> = None;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", row.len())));
        }
        let id = row[0].to_string();
        match &station_id {
            None => station_id = Some(id),
            Some(s) if *s != id => {
                return Err(Error::Schema(format!(
                    "{}:{line}: mixed station ids `{s}` and `{id}`",
                    path.display()
                )))
            }
            _ => {}
        }
        let date = parse_date(&row[1]).map_err(bad)?;
        let value = parse_opt_f64(&row[2]).map_err(bad)?;
        records.push(DailyRecord { date, value });
    }
    let station_id = station_id
        .ok_or_else(|| Error::Schema(format!("{}: no data rows", path.display())))?;
    Ok(RawSeries {
        station_id,
        records,
    })
}

/// Loads one station's daily series: parse, drop Feb 29, place on the
/// 365-day grid with unobserved days masked. Location metadata defaults to
/// (0, 0) until joined with a metadata file.
pub fn load_station_csv(path: &Path, variable: Variable) -> Result<StationSeries> {
    let raw = drop_leap_days(read_raw_series(path)?);
    let meta = StationMeta::new(raw.station_id.clone(), 0.0, 0.0);
    assemble_series(&raw, meta, variable)
}

/// Reads `station_id,lat,lon,elevation,state`.
pub fn load_metadata_csv(path: &Path) -> Result<Vec<StationMeta>> {
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &["station_id", "lat", "lon"])?;
    let mut out: Vec<StationMeta> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() < 3 {
            return Err(bad("expected at least station_id,lat,lon".into()));
        }
        let num = |s: &str| -> std::result::Result<f64, String> {
            parse_opt_f64(s)?.ok_or_else(|| "missing coordinate".to_string())
        };
        let lat = num(&row[1]).map_err(bad)?;
        let lon = num(&row[2]).map_err(bad)?;
        if !lat.is_finite() || !lon.is_finite() {
            return Err(bad("non-finite coordinate".into()));
        }
        let elevation = row.get(3).map(parse_opt_f64).transpose().map_err(bad)?.flatten();
        let state = row.get(4).filter(|s| !s.is_empty()).map(str::to_string);
        let meta = StationMeta {
            station_id: row[0].to_string(),
            lat,
            lon,
            elevation,
            state,
        };
        if out.iter().any(|m| m.station_id == meta.station_id) {
            return Err(Error::Schema(format!(
                "{}:{line}: duplicate station id `{}`",
                path.display(),
                meta.station_id
            )));
        }
        out.push(meta);
    }
    Ok(out)
}

/// A covariate such as SOI on the 365-day calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSeries {
    pub name: String,
    pub start_year: i32,
    values: Vec<Option<f64>>,
}

impl CovariateSeries {
    pub fn from_daily(name: impl Into<String>, start_year: i32, values: Vec<f64>) -> Result<Self> {
        if values.len() % DAYS_PER_YEAR != 0 {
            return Err(Error::Schema("covariate is not a whole number of years".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite covariate value".into()));
        }
        Ok(CovariateSeries {
            name: name.into(),
            start_year,
            values: values.into_iter().map(Some).collect(),
        })
    }

    pub fn get(&self, year: i32, d: usize) -> Option<f64> {
        if year < self.start_year || !(1..=DAYS_PER_YEAR).contains(&d) {
            return None;
        }
        let c = (year - self.start_year) as usize * DAYS_PER_YEAR + d - 1;
        self.values.get(c).copied().flatten()
    }

    /// Values for every cell of `window`; errors if any cell is uncovered.
    pub fn aligned(&self, window: StudyWindow) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(window.n_cells());
        for year in window.start_year..=window.end_year {
            for d in 1..=DAYS_PER_YEAR {
                out.push(self.get(year, d).ok_or_else(|| {
                    Error::Schema(format!(
                        "covariate `{}` does not cover {year} day {d}",
                        self.name
                    ))
                })?);
            }
        }
        Ok(out)
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        let vals = self.values.iter().flatten();
        let lo = vals.clone().cloned().reduce(f64::min)?;
        let hi = vals.cloned().reduce(f64::max)?;
        Some((lo, hi))
    }
}

/// Reads `date,value`. When every date falls on the first of a month the
/// file is treated as monthly and each value is broadcast to its month.
pub fn load_covariate_csv(path: &Path, name: &str) -> Result<CovariateSeries> {
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &["date", "value"])?;
    let mut rows = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", row.len())));
        }
        let date = parse_date(&row[0]).map_err(bad)?;
        let value = parse_opt_f64(&row[1])
            .map_err(bad)?
            .ok_or_else(|| bad("covariate values may not be empty".into()))?;
        if !value.is_finite() {
            return Err(bad("non-finite covariate value".into()));
        }
        rows.push((date, value));
    }
    if rows.is_empty() {
        return Err(Error::Schema(format!("{}: no covariate rows", path.display())));
    }
    let monthly = rows.iter().all(|(d, _)| d.day() == 1);
    let start_year = rows.iter().map(|(d, _)| d.year()).min().unwrap();
    let end_year = rows.iter().map(|(d, _)| d.year()).max().unwrap();
    let years = (end_year - start_year + 1) as usize;
    let mut values = vec![None; years * DAYS_PER_YEAR];
    if monthly {
        let by_month: BTreeMap<(i32, u32), f64> =
            rows.iter().map(|(d, v)| ((d.year(), d.month()), *v)).collect();
        for (c, slot) in values.iter_mut().enumerate() {
            let year = start_year + (c / DAYS_PER_YEAR) as i32;
            let month = month_of_day(c % DAYS_PER_YEAR + 1);
            *slot = by_month.get(&(year, month)).copied();
        }
    } else {
        for (date, v) in rows {
            if let Some(d) = day_of_year_365(date) {
                values[(date.year() - start_year) as usize * DAYS_PER_YEAR + d - 1] = Some(v);
            }
        }
    }
    Ok(CovariateSeries {
        name: name.to_string(),
        start_year,
        values,
    })
}

/// How the missing fraction used by [`filter_stations`] is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissingBasis {
    /// Over every cell of the required study window.
    #[default]
    StudyWindow,
    /// Over the station's own in-range span.
    StationSpan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRules {
    pub max_missing_frac: f64,
    /// Window the missing fraction is computed over, and the span that
    /// observations must cover when `require_span` is set.
    pub required_span: StudyWindow,
    pub require_span: bool,
    pub basis: MissingBasis,
}

impl SelectionRules {
    /// Stations with more than 20% missing days are dropped.
    pub fn new(required_span: StudyWindow) -> Self {
        SelectionRules {
            max_missing_frac: 0.2,
            required_span,
            require_span: true,
            basis: MissingBasis::StudyWindow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ExclusionReason {
    TooManyMissing { fraction: f64 },
    SpanNotCovered { first_year: Option<i32>, last_year: Option<i32> },
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub retained: Vec<StationSeries>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Fraction of missing cells, over the window or over the station span.
pub fn missing_fraction(series: &StationSeries, window: StudyWindow, basis: MissingBasis) -> f64 {
    match basis {
        MissingBasis::StudyWindow => {
            let mut missing = 0usize;
            for year in window.start_year..=window.end_year {
                for d in 1..=DAYS_PER_YEAR {
                    if series.get(year, d).is_none() {
                        missing += 1;
                    }
                }
            }
            missing as f64 / window.n_cells() as f64
        }
        MissingBasis::StationSpan => {
            let (lo, hi) = series.span();
            let cells = &series.cells()[lo..=hi];
            cells.iter().filter(|v| v.is_none()).count() as f64 / cells.len() as f64
        }
    }
}

/// Keeps stations whose missing fraction is at most `max_missing_frac` and,
/// when `require_span` is set, whose observations start no later than and
/// end no earlier than the required span. An empty result is not an error; exclusions are
/// returned and logged.
pub fn filter_stations(stations: Vec<StationSeries>, rules: &SelectionRules) -> Result<FilterOutcome> {
    if !(0.0..=1.0).contains(&rules.max_missing_frac) {
        return Err(Error::Domain(format!(
            "max_missing_frac {} outside [0, 1]",
            rules.max_missing_frac
        )));
    }
    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for s in stations {
        let frac = missing_fraction(&s, rules.required_span, rules.basis);
        let years = s.observed_years();
        let covers = matches!(years, Some((a, b))
            if a <= rules.required_span.start_year && b >= rules.required_span.end_year);
        if frac > rules.max_missing_frac {
            excluded.push((s.meta.station_id.clone(), ExclusionReason::TooManyMissing { fraction: frac }));
        } else if rules.require_span && !covers {
            excluded.push((
                s.meta.station_id.clone(),
                ExclusionReason::SpanNotCovered {
                    first_year: years.map(|y| y.0),
                    last_year: years.map(|y| y.1),
                },
            ));
        } else {
            retained.push(s);
        }
    }
    if !excluded.is_empty() {
        log::warn!("{} station(s) excluded by selection rules", excluded.len());
    }
    Ok(FilterOutcome { retained, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeIndex {
    /// Day counter from the start of the normalization range, starting at 1.
    pub t_raw: usize,
    /// `(t_raw - 1) / (N - 1)`.
    pub t_norm: f64,
    /// Day of year, 1..=365.
    pub d: usize,
    pub year: i32,
}

fn build_index(start_year: i32, first_cell: usize, n: usize) -> Result<Vec<TimeIndex>> {
    if n < 2 {
        return Err(Error::Degenerate(
            "time normalization needs at least two days".into(),
        ));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let cell = first_cell + i;
            TimeIndex {
                t_raw: i + 1,
                t_norm: i as f64 / denom,
                d: cell % DAYS_PER_YEAR + 1,
                year: start_year + (cell / DAYS_PER_YEAR) as i32,
            }
        })
        .collect())
}

/// Time index over the series' in-range span: the first in-range day maps
/// to 0 and the last to 1.
pub fn time_index(series: &StationSeries) -> Result<Vec<TimeIndex>> {
    let (lo, hi) = series.span();
    build_index(series.start_year, lo, hi - lo + 1)
}

/// Time index over a fixed study window, shared by all stations so that
/// trend coefficients are comparable.
pub fn time_index_in_window(window: StudyWindow) -> Result<Vec<TimeIndex>> {
    build_index(window.start_year, 0, window.n_cells())
}
