//! Observations laid out for the sampler.

use crate::data::{CovariateSeries, StationSeries, StudyWindow, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::gp::Location;
use crate::harmonics::fill_design_row;
use crate::quantile::{CovariateRanges, Covariates, ModelSpec, Slot};

/// One observed day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    /// Cell index within the study window.
    pub cell: usize,
    pub y: f64,
    pub t: f64,
    /// Day of year, 1..=365.
    pub d: usize,
    pub soi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationData {
    pub station_id: String,
    pub location: Location,
    pub obs: Vec<Obs>,
    /// Fitted seasonal standard deviation per day of year.
    pub sigma_d: Vec<f64>,
}

impl StationData {
    pub fn covariates(&self, o: &Obs) -> Covariates {
        Covariates {
            t: o.t,
            d: o.d,
            soi: o.soi,
            sigma_d: self.sigma_d[o.d - 1],
        }
    }
}

/// Everything the likelihood needs, shared immutably by a chain.
#[derive(Debug, Clone)]
pub struct FitData {
    pub spec: ModelSpec,
    pub stations: Vec<StationData>,
    /// Number of days in the study window; the latent path has this length.
    pub n_cells: usize,
    /// Covariate box over which scales must stay positive.
    pub ranges: CovariateRanges,
    /// `sin1..k, cos1..k` for each day of year.
    fourier: Vec<f64>,
}

impl FitData {
    /// Assembles fit data from station series on a common study window.
    /// Normalized time runs over the whole window. `sigma_d` holds one
    /// 365-vector per station; pass all-ones when the model does not use it.
    pub fn from_series(
        spec: ModelSpec,
        series: &[StationSeries],
        sigma_d: &[Vec<f64>],
        soi: Option<&CovariateSeries>,
        window: StudyWindow,
    ) -> Result<Self> {
        if series.len() != sigma_d.len() {
            return Err(Error::Schema(format!(
                "{} series but {} sigma_d profiles",
                series.len(),
                sigma_d.len()
            )));
        }
        if spec.use_soi && soi.is_none() {
            return Err(Error::Config("model uses SOI but no SOI series was given".into()));
        }
        let n_cells = window.n_cells();
        if n_cells < 2 {
            return Err(Error::Degenerate("study window shorter than two days".into()));
        }
        let soi_vals = match soi {
            Some(c) if spec.use_soi => Some(c.aligned(window)?),
            _ => None,
        };
        let denom = (n_cells - 1) as f64;
        let mut stations = Vec::with_capacity(series.len());
        for (s, sig) in series.iter().zip(sigma_d) {
            if sig.len() != DAYS_PER_YEAR || sig.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "station {}: sigma_d must be 365 positive values",
                    s.meta.station_id
                )));
            }
            let mut obs = Vec::new();
            for year in window.start_year..=window.end_year {
                for d in 1..=DAYS_PER_YEAR {
                    if let Some(y) = s.get(year, d) {
                        let cell = (year - window.start_year) as usize * DAYS_PER_YEAR + d - 1;
                        obs.push(Obs {
                            cell,
                            y,
                            t: cell as f64 / denom,
                            d,
                            soi: soi_vals.as_ref().map_or(0.0, |v| v[cell]),
                        });
                    }
                }
            }
            stations.push(StationData {
                station_id: s.meta.station_id.clone(),
                location: s.meta.location(),
                obs,
                sigma_d: sig.clone(),
            });
        }
        let soi_range = soi_vals
            .as_ref()
            .map(|v| {
                v.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
            })
            .unwrap_or((0.0, 0.0));
        let sig_range = sigma_d
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let sig_range = if sigma_d.is_empty() { (1.0, 1.0) } else { sig_range };
        Self::new(spec, stations, n_cells, CovariateRanges {
            t: (0.0, 1.0),
            soi: soi_range,
            sigma_d: sig_range,
        })
    }

    /// Fit data from prepared stations.
    pub fn new(spec: ModelSpec, stations: Vec<StationData>, n_cells: usize, ranges: CovariateRanges) -> Result<Self> {
        for st in &stations {
            if st.sigma_d.len() != DAYS_PER_YEAR {
                return Err(Error::Schema(format!("station {}: sigma_d must have 365 values", st.station_id)));
            }
            if let Some(o) = st.obs.iter().find(|o| o.cell >= n_cells || !(1..=DAYS_PER_YEAR).contains(&o.d)) {
                return Err(Error::Schema(format!(
                    "station {}: observation at cell {} day {} outside the window",
                    st.station_id, o.cell, o.d
                )));
            }
        }
        let k = spec.k;
        let mut fourier = vec![0.0; DAYS_PER_YEAR * 2 * k];
        if k > 0 {
            for d in 1..=DAYS_PER_YEAR {
                fill_design_row(d, &mut fourier[(d - 1) * 2 * k..d * 2 * k]);
            }
        }
        Ok(FitData {
            spec,
            stations,
            n_cells,
            ranges,
            fourier,
        })
    }

    pub fn locations(&self) -> Vec<Location> {
        self.stations.iter().map(|s| s.location).collect()
    }

    pub fn n_obs(&self) -> usize {
        self.stations.iter().map(|s| s.obs.len()).sum()
    }

    /// `Σ_j coef_j · slot_j(obs)` for every observation of a station, written
    /// to `out`. Seasonal parts are tabulated by day first.
    pub(crate) fn linear_term(&self, station: usize, slots: &[Slot], coef: &[f64], out: &mut Vec<f64>) {
        let st = &self.stations[station];
        let k = self.spec.k;
        let mut day = [0.0; DAYS_PER_YEAR];
        let (mut ct, mut cs) = (0.0, 0.0);
        let mut seasonal = false;
        let mut base = 0.0;
        for (slot, &c) in slots.iter().zip(coef) {
            if c == 0.0 {
                continue;
            }
            match *slot {
                Slot::Intercept => base += c,
                Slot::Time => ct = c,
                Slot::Soi => cs = c,
                Slot::Sigma => {
                    seasonal = true;
                    for (v, s) in day.iter_mut().zip(&st.sigma_d) {
                        *v += c * s;
                    }
                }
                Slot::Sin(j) => {
                    seasonal = true;
                    for (d, v) in day.iter_mut().enumerate() {
                        *v += c * self.fourier[d * 2 * k + j - 1];
                    }
                }
                Slot::Cos(j) => {
                    seasonal = true;
                    for (d, v) in day.iter_mut().enumerate() {
                        *v += c * self.fourier[d * 2 * k + k + j - 1];
                    }
                }
            }
        }
        out.clear();
        out.extend(st.obs.iter().map(|o| {
            let mut v = base + ct * o.t + cs * o.soi;
            if seasonal {
                v += day[o.d - 1];
            }
            v
        }));
    }
}
