//! Metropolis-within-Gibbs sampler state and updates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapt::Adaptive;
use super::data::{FitData, Obs, StationData};
use super::latent::{innovation, innovation_factor, latent_log_density, LatentCopula};
use super::summary::{BlockRate, PosteriorSample};
use super::ChainConfig;
use crate::error::{Error, Result};
use crate::gp::{gp_logpdf, GPField, GPHyperParams, GpFactor, HyperPrior};
use crate::lsq::least_squares;
use crate::math::{norm_quantile, LN_SQRT_2PI};
use crate::quantile::{
    check_positive_scales, fast_log_density, fast_piece_log_density, piece_scale_positive, piecewise_params,
    KnotGrid, ModelForm, ModelSpec, QuantileCoeffs, Slot,
};

/// Hyperparameters of one coefficient slot. Median slots have a single
/// field; scale slots have one field per piece, sharing sill and range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGroup {
    pub means: Vec<f64>,
    pub sill: f64,
    pub range: f64,
}

impl HyperGroup {
    pub fn field_hyper(&self, field: usize) -> GPHyperParams {
        GPHyperParams {
            mean: self.means[field],
            sill: self.sill,
            range: self.range,
        }
    }
}

/// Full sampler state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// One coefficient set per station.
    pub coeffs: Vec<QuantileCoeffs>,
    /// One group per median slot.
    pub beta_hyper: Vec<HyperGroup>,
    /// One group per scale slot.
    pub theta_hyper: Vec<HyperGroup>,
    pub copula: Option<LatentCopula>,
    /// Unnormalized log posterior, tracked incrementally.
    pub log_post: f64,
}

fn station_field(coeffs: &[QuantileCoeffs], beta: bool, slot: usize, piece: usize) -> Vec<f64> {
    coeffs
        .iter()
        .map(|c| if beta { c.beta[slot] } else { c.theta[piece][slot] })
        .collect()
}

/// Log-likelihood of one station given per-observation medians and scales
/// (`obs × L`, row-major). With a latent path the piece comes from it.
fn station_loglik(grid: &KnotGrid, obs: &[Obs], mu: &[f64], sig: &[f64], latent: Option<&[f64]>) -> f64 {
    let l = grid.pieces();
    let mut total = 0.0;
    for (i, o) in obs.iter().enumerate() {
        let sigma = &sig[i * l..(i + 1) * l];
        if sigma.iter().any(|v| !(*v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        total += match latent {
            Some(v) => fast_piece_log_density(grid, mu[i], sigma, o.y, grid.piece_of_normal(v[o.cell])),
            None => fast_log_density(grid, mu[i], sigma, o.y).0,
        };
    }
    total
}

fn station_terms(data: &FitData, s: usize, coeffs: &QuantileCoeffs, mu: &mut Vec<f64>, sig: &mut Vec<f64>) {
    let l = data.spec.pieces();
    data.linear_term(s, data.spec.beta_slots(), &coeffs.beta, mu);
    let n = data.stations[s].obs.len();
    sig.clear();
    sig.resize(n * l, 0.0);
    let mut col = Vec::new();
    for (p, th) in coeffs.theta.iter().enumerate() {
        data.linear_term(s, data.spec.theta_slots(), th, &mut col);
        for (i, v) in col.iter().enumerate() {
            sig[i * l + p] = *v;
        }
    }
}

/// Log-likelihood of the data. With a copula each observation's piece is the
/// one selected by its latent level, and the observation contributes that
/// piece's normal log-density; otherwise the marginal piecewise density is
/// used. Scales that are not positive at some observation give `−∞`.
pub fn log_likelihood(data: &FitData, coeffs: &[QuantileCoeffs], copula: Option<&LatentCopula>) -> f64 {
    let (mut mu, mut sig) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    for (s, st) in data.stations.iter().enumerate() {
        station_terms(data, s, &coeffs[s], &mut mu, &mut sig);
        let latent = copula.map(|c| c.v[s].as_slice());
        total += station_loglik(&data.spec.grid, &st.obs, &mu, &sig, latent);
    }
    total
}

/// Log posterior from scratch, with the dense GP density for every
/// coefficient field. Hyperprior terms omit their normalizing constants.
pub fn log_posterior(data: &FitData, state: &ChainState, prior: &HyperPrior) -> Result<f64> {
    let locs = data.locations();
    let mut lp = log_likelihood(data, &state.coeffs, state.copula.as_ref());
    for (j, g) in state.beta_hyper.iter().enumerate() {
        let field = GPField {
            values: station_field(&state.coeffs, true, j, 0),
            hyper: g.field_hyper(0),
        };
        lp += gp_logpdf(&field, &locs)? + prior.log_mean(g.means[0]);
        lp += prior.log_sill(g.sill) + prior.log_range(g.range);
    }
    for (j, g) in state.theta_hyper.iter().enumerate() {
        for (l, m) in g.means.iter().enumerate() {
            let field = GPField {
                values: station_field(&state.coeffs, false, j, l),
                hyper: g.field_hyper(l),
            };
            lp += gp_logpdf(&field, &locs)? + prior.log_mean(*m);
        }
        lp += prior.log_sill(g.sill) + prior.log_range(g.range);
    }
    if let Some(c) = &state.copula {
        let factor = innovation_factor(&locs, c.psi_w)?;
        lp += latent_log_density(&c.v, c.psi_v, &factor) + copula_prior(c.psi_v, c.psi_w, prior);
    }
    Ok(lp)
}

/// `ψ_v ~ U(−1, 1)`; `ψ_w` shares the range prior.
fn copula_prior(psi_v: f64, psi_w: f64, prior: &HyperPrior) -> f64 {
    if psi_v.abs() < 1.0 {
        prior.log_range(psi_w)
    } else {
        f64::NEG_INFINITY
    }
}

/// One GP hyperparameter group with its unit-sill correlation factor.
struct Group {
    corr: GpFactor,
    /// `P·1` for the correlation precision `P`.
    row_sums: Vec<f64>,
    /// `1ᵀP1`.
    total: f64,
    fields: Vec<usize>,
}

impl Group {
    fn new(corr: GpFactor, fields: Vec<usize>) -> Self {
        let p = corr.precision();
        let row_sums: Vec<f64> = (0..p.nrows()).map(|i| p.row(i).sum()).collect();
        let total = row_sums.iter().sum();
        Group {
            corr,
            row_sums,
            total,
            fields,
        }
    }
}

/// Cached `r = P(x − m)` and `q = (x − m)ᵀP(x − m)` of a field.
#[derive(Clone, Default)]
struct FieldCache {
    r: Vec<f64>,
    q: f64,
}

fn field_cache(corr: &GpFactor, x: &[f64], mean: f64) -> FieldCache {
    let p = corr.precision();
    let n = x.len();
    let mut r = vec![0.0; n];
    let mut q = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += p[(i, j)] * (x[j] - mean);
        }
        r[i] = acc;
        q += (x[i] - mean) * acc;
    }
    FieldCache { r, q }
}

struct Proposals {
    beta: Vec<Adaptive>,
    /// `[station][piece]`.
    theta: Vec<Vec<Adaptive>>,
    /// `[group][field within group]`.
    means: Vec<Vec<Adaptive>>,
    sill: Vec<Adaptive>,
    range: Vec<Adaptive>,
    latent: Adaptive,
    psi_v: Adaptive,
    psi_w: Adaptive,
}

/// A running chain: state, likelihood caches and proposal adaptation.
pub struct Sampler<'a> {
    data: &'a FitData,
    config: &'a ChainConfig,
    state: ChainState,
    rng: ChaCha8Rng,
    mu: Vec<Vec<f64>>,
    /// Scales per observation, `obs × L` row-major.
    sig: Vec<Vec<f64>>,
    ll: Vec<f64>,
    groups: Vec<Group>,
    fields: Vec<FieldCache>,
    latent_corr: Option<GpFactor>,
    latent_lp: f64,
    /// Observation index per (station, cell), for latent updates.
    obs_at: Vec<Vec<u32>>,
    props: Proposals,
    burn_in: bool,
    iter: usize,
}

const NO_OBS: u32 = u32::MAX;

/// Accepts with probability `min(1, exp(log_alpha))`; returns the
/// acceptance probability and the decision.
fn metropolis<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> (f64, bool) {
    let alpha = if log_alpha.is_nan() { 0.0 } else { log_alpha.min(0.0).exp() };
    let u: f64 = rng.random();
    (alpha, u < alpha)
}

impl<'a> Sampler<'a> {
    /// Initializes a chain. Medians come from per-station least squares of
    /// the mean model. Scales start at `θ_σ = 1` (reduced form) or at the
    /// residual standard deviation in the intercept (full form). Sills and
    /// ranges start at their prior medians and field means at the average of
    /// the initial coefficients; `ψ_w` starts at the range median.
    pub fn new(config: &'a ChainConfig, data: &'a FitData) -> Result<Self> {
        config.validate()?;
        let spec = &data.spec;
        let prior = &config.hyper_prior;
        let n_st = data.stations.len();
        if n_st == 0 {
            return Err(Error::InsufficientData("no stations to fit".into()));
        }
        let l_count = spec.pieces();
        let mut coeffs = Vec::with_capacity(n_st);
        let mut beta_cov = Vec::with_capacity(n_st);
        let mut theta_cov = Vec::with_capacity(n_st);
        for st in &data.stations {
            let init = initial_station(spec, st)?;
            coeffs.push(init.coeffs);
            beta_cov.push(init.beta_cov);
            theta_cov.push(init.theta_cov);
        }
        let (sill0, range0) = (prior.sill_median(), prior.range_median());
        let avg = |beta: bool, slot: usize, piece: usize| crate::math::mean(&station_field(&coeffs, beta, slot, piece));
        let beta_hyper = (0..spec.beta_slots().len())
            .map(|j| HyperGroup {
                means: vec![avg(true, j, 0)],
                sill: sill0,
                range: range0,
            })
            .collect();
        let theta_hyper = (0..spec.theta_slots().len())
            .map(|j| HyperGroup {
                means: (0..l_count).map(|l| avg(false, j, l)).collect(),
                sill: sill0,
                range: range0,
            })
            .collect();
        let copula = if config.copula {
            Some(initial_copula(data, &coeffs, config.psi_v_init, range0))
        } else {
            None
        };
        let state = ChainState {
            coeffs,
            beta_hyper,
            theta_hyper,
            copula,
            log_post: 0.0,
        };

        let (mult, adapt, target) = (config.proposal_scale, config.adapt, config.target_accept);
        let n_groups = spec.beta_slots().len() + spec.theta_slots().len();
        let mean_sd = (sill0 / n_st as f64).sqrt();
        let props = Proposals {
            beta: beta_cov.into_iter().map(|c| Adaptive::new(c, mult, adapt, target)).collect(),
            theta: theta_cov
                .into_iter()
                .map(|c| (0..l_count).map(|_| Adaptive::new(c.clone(), mult, adapt, target)).collect())
                .collect(),
            means: (0..n_groups)
                .map(|g| {
                    let nf = if g < spec.beta_slots().len() { 1 } else { l_count };
                    (0..nf).map(|_| Adaptive::scalar(mean_sd, mult, adapt, target)).collect()
                })
                .collect(),
            sill: (0..n_groups).map(|_| Adaptive::scalar(0.5, mult, adapt, target)).collect(),
            range: (0..n_groups).map(|_| Adaptive::scalar(0.5, mult, adapt, target)).collect(),
            latent: Adaptive::scalar(1.0, mult, adapt, target),
            psi_v: Adaptive::scalar(0.05, mult, adapt, target),
            psi_w: Adaptive::scalar(0.3, mult, adapt, target),
        };
        let obs_at = if config.copula {
            data.stations
                .iter()
                .map(|st| {
                    let mut m = vec![NO_OBS; data.n_cells];
                    for (i, o) in st.obs.iter().enumerate() {
                        m[o.cell] = i as u32;
                    }
                    m
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut sampler = Sampler {
            data,
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            mu: vec![Vec::new(); n_st],
            sig: vec![Vec::new(); n_st],
            ll: vec![0.0; n_st],
            groups: Vec::new(),
            fields: Vec::new(),
            latent_corr: None,
            latent_lp: 0.0,
            obs_at,
            props,
            burn_in: true,
            iter: 0,
        };
        sampler.rebuild()?;
        Ok(sampler)
    }

    /// Replaces the state (for example to start from chosen
    /// hyperparameters) and rebuilds every cache.
    pub fn set_state(&mut self, state: ChainState) -> Result<()> {
        let spec = &self.data.spec;
        let shape_ok = state.coeffs.len() == self.data.stations.len()
            && state.coeffs.iter().all(|c| {
                c.beta.len() == spec.beta_slots().len()
                    && c.theta.len() == spec.pieces()
                    && c.theta.iter().all(|t| t.len() == spec.theta_slots().len())
            })
            && state.beta_hyper.len() == spec.beta_slots().len()
            && state.beta_hyper.iter().all(|g| g.means.len() == 1)
            && state.theta_hyper.len() == spec.theta_slots().len()
            && state.theta_hyper.iter().all(|g| g.means.len() == spec.pieces())
            && state.copula.is_some() == self.config.copula
            && state.copula.as_ref().is_none_or(|c| {
                c.v.len() == self.data.stations.len() && c.v.iter().all(|r| r.len() == self.data.n_cells)
            });
        if !shape_ok {
            return Err(Error::Schema("chain state does not match the model and data".into()));
        }
        self.state = state;
        self.rebuild()
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    fn n_beta(&self) -> usize {
        self.data.spec.beta_slots().len()
    }

    fn group_of(&self, f: usize) -> usize {
        let nb = self.n_beta();
        if f < nb {
            f
        } else {
            nb + (f - nb) / self.data.spec.pieces()
        }
    }

    /// Index of field `f` within its group's means.
    fn member_of(&self, f: usize) -> usize {
        let nb = self.n_beta();
        if f < nb {
            0
        } else {
            (f - nb) % self.data.spec.pieces()
        }
    }

    fn hyper(&self, g: usize) -> &HyperGroup {
        let nb = self.n_beta();
        if g < nb {
            &self.state.beta_hyper[g]
        } else {
            &self.state.theta_hyper[g - nb]
        }
    }

    fn hyper_mut(&mut self, g: usize) -> &mut HyperGroup {
        let nb = self.n_beta();
        if g < nb {
            &mut self.state.beta_hyper[g]
        } else {
            &mut self.state.theta_hyper[g - nb]
        }
    }

    fn field_values(&self, f: usize) -> Vec<f64> {
        let nb = self.n_beta();
        if f < nb {
            station_field(&self.state.coeffs, true, f, 0)
        } else {
            let l = self.data.spec.pieces();
            station_field(&self.state.coeffs, false, (f - nb) / l, (f - nb) % l)
        }
    }

    fn field_mean(&self, f: usize) -> f64 {
        self.hyper(self.group_of(f)).means[self.member_of(f)]
    }

    /// Rebuilds factors and caches from the state and checks that the
    /// starting point has a finite log posterior.
    fn rebuild(&mut self) -> Result<()> {
        let locs = self.data.locations();
        let nb = self.n_beta();
        let nt = self.data.spec.theta_slots().len();
        let l_count = self.data.spec.pieces();
        let mut groups = Vec::with_capacity(nb + nt);
        for g in 0..nb + nt {
            let h = self.hyper(g);
            if !(h.sill > 0.0) || !(h.range > 0.0) {
                return Err(Error::Initialization(format!(
                    "GP group {g}: sill {} and range {} must be positive",
                    h.sill, h.range
                )));
            }
            let corr = GpFactor::exponential(&locs, 1.0, h.range)
                .map_err(|e| Error::Initialization(format!("GP group {g}: {e}")))?;
            let fields = if g < nb {
                vec![g]
            } else {
                (0..l_count).map(|l| nb + (g - nb) * l_count + l).collect()
            };
            groups.push(Group::new(corr, fields));
        }
        self.groups = groups;
        self.latent_corr = match &self.state.copula {
            Some(c) => {
                c.validate().map_err(|e| Error::Initialization(e.to_string()))?;
                Some(
                    innovation_factor(&locs, c.psi_w)
                        .map_err(|e| Error::Initialization(format!("latent innovations: {e}")))?,
                )
            }
            None => None,
        };
        for s in 0..self.data.stations.len() {
            let (mut mu, mut sig) = (Vec::new(), Vec::new());
            station_terms(self.data, s, &self.state.coeffs[s], &mut mu, &mut sig);
            self.mu[s] = mu;
            self.sig[s] = sig;
        }
        self.refresh();
        self.state.log_post = self.assemble();
        self.diagnose()
    }

    /// Exact recomputation of the quantities that are otherwise updated
    /// incrementally.
    fn refresh(&mut self) {
        let n_fields = self.groups.iter().map(|g| g.fields.len()).sum();
        let mut fields = vec![FieldCache::default(); n_fields];
        for g in &self.groups {
            for &f in &g.fields {
                fields[f] = field_cache(&g.corr, &self.field_values(f), self.field_mean(f));
            }
        }
        self.fields = fields;
        for s in 0..self.data.stations.len() {
            let latent = self.state.copula.as_ref().map(|c| c.v[s].as_slice());
            self.ll[s] = station_loglik(
                &self.data.spec.grid,
                &self.data.stations[s].obs,
                &self.mu[s],
                &self.sig[s],
                latent,
            );
        }
        if let (Some(c), Some(f)) = (&self.state.copula, &self.latent_corr) {
            self.latent_lp = latent_log_density(&c.v, c.psi_v, f);
        }
    }

    fn group_log_prior(&self, g: usize) -> f64 {
        let grp = &self.groups[g];
        let h = self.hyper(g);
        let prior = &self.config.hyper_prior;
        let n = self.data.stations.len() as f64;
        let mut lp = prior.log_sill(h.sill) + prior.log_range(h.range);
        for (k, &f) in grp.fields.iter().enumerate() {
            lp += -0.5 * self.fields[f].q / h.sill - 0.5 * (n * h.sill.ln() + grp.corr.log_det()) - n * LN_SQRT_2PI;
            lp += prior.log_mean(h.means[k]);
        }
        lp
    }

    fn assemble(&self) -> f64 {
        let mut lp: f64 = self.ll.iter().sum();
        for g in 0..self.groups.len() {
            lp += self.group_log_prior(g);
        }
        if let Some(c) = &self.state.copula {
            lp += self.latent_lp + copula_prior(c.psi_v, c.psi_w, &self.config.hyper_prior);
        }
        lp
    }

    fn diagnose(&self) -> Result<()> {
        if self.state.log_post.is_finite() {
            return Ok(());
        }
        let mut parts = Vec::new();
        for (s, ll) in self.ll.iter().enumerate() {
            if !ll.is_finite() {
                let id = &self.data.stations[s].station_id;
                let why = match check_positive_scales(&self.data.spec, &self.state.coeffs[s], &self.data.ranges) {
                    crate::quantile::ScaleCheck::Fail(w) => {
                        format!("sigma_{} = {} at t = {}", w.piece, w.value, w.t)
                    }
                    crate::quantile::ScaleCheck::Pass => format!("log-likelihood {ll}"),
                };
                parts.push(format!("station {id}: {why}"));
            }
        }
        for g in 0..self.groups.len() {
            let lp = self.group_log_prior(g);
            if !lp.is_finite() {
                let h = self.hyper(g);
                parts.push(format!(
                    "GP group {g}: log prior {lp} (sill {}, range {}, means {:?})",
                    h.sill, h.range, h.means
                ));
            }
        }
        if let Some(c) = &self.state.copula {
            if !self.latent_lp.is_finite() || !copula_prior(c.psi_v, c.psi_w, &self.config.hyper_prior).is_finite() {
                parts.push(format!("latent path: log density {} (psi_v {}, psi_w {})", self.latent_lp, c.psi_v, c.psi_w));
            }
        }
        Err(Error::Initialization(format!(
            "log posterior is {} at the starting point: {}",
            self.state.log_post,
            parts.join("; ")
        )))
    }

    pub fn set_burn_in(&mut self, burn_in: bool) {
        self.burn_in = burn_in;
    }

    /// One full sweep over every enabled block.
    pub fn step(&mut self) {
        self.refresh();
        if self.config.update_coeffs {
            self.update_coefficients();
        }
        if self.config.update_hypers {
            self.update_hyperparams();
        }
        if self.state.copula.is_some() {
            self.update_latent();
            if self.config.update_hypers {
                self.update_copula_hypers();
            }
        }
        self.state.log_post = self.assemble();
        self.iter += 1;
    }

    fn latent_row(&self, s: usize) -> Option<&[f64]> {
        self.state.copula.as_ref().map(|c| c.v[s].as_slice())
    }

    /// Prior change of field `f` when station `s` moves by `delta`.
    fn field_delta(&self, f: usize, s: usize, delta: f64) -> f64 {
        let g = self.group_of(f);
        let pss = self.groups[g].corr.precision()[(s, s)];
        -(delta * self.fields[f].r[s] + 0.5 * delta * delta * pss) / self.hyper(g).sill
    }

    fn commit_field(&mut self, f: usize, s: usize, delta: f64) {
        let g = self.group_of(f);
        let p = self.groups[g].corr.precision();
        let cache = &mut self.fields[f];
        cache.q += delta * (2.0 * cache.r[s] + delta * p[(s, s)]);
        for (i, r) in cache.r.iter_mut().enumerate() {
            *r += delta * p[(i, s)];
        }
    }

    /// Block random-walk Metropolis over each station's median coefficients
    /// and then over each piece's scale coefficients.
    pub fn update_coefficients(&mut self) {
        let data = self.data;
        let spec = &data.spec;
        let grid = &spec.grid;
        let l_count = spec.pieces();
        let nb = self.n_beta();
        let (mut prop, mut mu_new, mut sig_new, mut col) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for s in 0..data.stations.len() {
            let obs = &data.stations[s].obs;
            let cur = &self.state.coeffs[s].beta;
            self.props.beta[s].propose(cur, &mut self.rng, &mut prop);
            let mut dprior = 0.0;
            for j in 0..nb {
                let d = prop[j] - cur[j];
                if d != 0.0 {
                    dprior += self.field_delta(j, s, d);
                }
            }
            data.linear_term(s, spec.beta_slots(), &prop, &mut mu_new);
            let ll_new = station_loglik(grid, obs, &mu_new, &self.sig[s], self.latent_row(s));
            let (alpha, ok) = metropolis(ll_new - self.ll[s] + dprior, &mut self.rng);
            self.props.beta[s].record(alpha, ok, self.burn_in);
            if ok {
                for (j, p) in prop.iter().enumerate() {
                    let d = p - self.state.coeffs[s].beta[j];
                    if d != 0.0 {
                        self.commit_field(j, s, d);
                    }
                }
                self.state.coeffs[s].beta.clone_from(&prop);
                std::mem::swap(&mut self.mu[s], &mut mu_new);
                self.ll[s] = ll_new;
            }
            if self.burn_in {
                self.props.beta[s].observe(&self.state.coeffs[s].beta);
            }

            for l in 0..l_count {
                let cur = &self.state.coeffs[s].theta[l];
                self.props.theta[s][l].propose(cur, &mut self.rng, &mut prop);
                if !piece_scale_positive(spec, &prop, &data.ranges) {
                    self.props.theta[s][l].record(0.0, false, self.burn_in);
                    if self.burn_in {
                        self.props.theta[s][l].observe(&self.state.coeffs[s].theta[l]);
                    }
                    continue;
                }
                let mut dprior = 0.0;
                for (j, (p, c)) in prop.iter().zip(cur).enumerate() {
                    let d = p - c;
                    if d != 0.0 {
                        dprior += self.field_delta(nb + j * l_count + l, s, d);
                    }
                }
                data.linear_term(s, spec.theta_slots(), &prop, &mut col);
                sig_new.clone_from(&self.sig[s]);
                for (i, v) in col.iter().enumerate() {
                    sig_new[i * l_count + l] = *v;
                }
                let ll_new = station_loglik(grid, obs, &self.mu[s], &sig_new, self.latent_row(s));
                let (alpha, ok) = metropolis(ll_new - self.ll[s] + dprior, &mut self.rng);
                self.props.theta[s][l].record(alpha, ok, self.burn_in);
                if ok {
                    for (j, p) in prop.iter().enumerate() {
                        let d = p - self.state.coeffs[s].theta[l][j];
                        if d != 0.0 {
                            self.commit_field(nb + j * l_count + l, s, d);
                        }
                    }
                    self.state.coeffs[s].theta[l].clone_from(&prop);
                    std::mem::swap(&mut self.sig[s], &mut sig_new);
                    self.ll[s] = ll_new;
                }
                if self.burn_in {
                    self.props.theta[s][l].observe(&self.state.coeffs[s].theta[l]);
                }
            }
        }
    }

    /// Field means by Gaussian random walk, sills and ranges by log-scale
    /// random walk (with the Jacobian of the log transform).
    pub fn update_hyperparams(&mut self) {
        let prior = self.config.hyper_prior;
        let n = self.data.stations.len() as f64;
        let locs = self.data.locations();
        for g in 0..self.groups.len() {
            let sill = self.hyper(g).sill;
            let members = self.groups[g].fields.clone();
            for (k, &f) in members.iter().enumerate() {
                let m = self.hyper(g).means[k];
                let m_new = self.props.means[g][k].propose_scalar(m, &mut self.rng);
                let eps = m_new - m;
                let grp = &self.groups[g];
                let sum_r: f64 = self.fields[f].r.iter().sum();
                let q_new = self.fields[f].q - 2.0 * eps * sum_r + eps * eps * grp.total;
                let log_alpha = -0.5 * (q_new - self.fields[f].q) / sill + prior.log_mean(m_new) - prior.log_mean(m);
                let (alpha, ok) = metropolis(log_alpha, &mut self.rng);
                self.props.means[g][k].record(alpha, ok, self.burn_in);
                if ok {
                    self.hyper_mut(g).means[k] = m_new;
                    let rs = &self.groups[g].row_sums;
                    let cache = &mut self.fields[f];
                    for (r, p1) in cache.r.iter_mut().zip(rs) {
                        *r -= eps * p1;
                    }
                    cache.q = q_new;
                }
            }

            let q_sum: f64 = members.iter().map(|&f| self.fields[f].q).sum();
            let nf = members.len() as f64;
            let step = self.props.sill[g].propose_scalar(0.0, &mut self.rng);
            let sill_new = sill * step.exp();
            let log_alpha = -0.5 * q_sum * (1.0 / sill_new - 1.0 / sill) - 0.5 * nf * n * step
                + prior.log_sill(sill_new)
                - prior.log_sill(sill)
                + step;
            let (alpha, ok) = metropolis(log_alpha, &mut self.rng);
            self.props.sill[g].record(alpha, ok, self.burn_in);
            if ok {
                self.hyper_mut(g).sill = sill_new;
            }

            let sill = self.hyper(g).sill;
            let range = self.hyper(g).range;
            let step = self.props.range[g].propose_scalar(0.0, &mut self.rng);
            let range_new = range * step.exp();
            let factor = if prior.log_range(range_new).is_finite() {
                GpFactor::exponential(&locs, 1.0, range_new).ok()
            } else {
                None
            };
            let Some(factor) = factor else {
                self.props.range[g].record(0.0, false, self.burn_in);
                continue;
            };
            let caches: Vec<FieldCache> = members
                .iter()
                .map(|&f| field_cache(&factor, &self.field_values(f), self.field_mean(f)))
                .collect();
            let dq: f64 = members.iter().zip(&caches).map(|(&f, c)| c.q - self.fields[f].q).sum();
            let log_alpha = -0.5 * dq / sill - 0.5 * nf * (factor.log_det() - self.groups[g].corr.log_det()) + step;
            let (alpha, ok) = metropolis(log_alpha, &mut self.rng);
            self.props.range[g].record(alpha, ok, self.burn_in);
            if ok {
                self.hyper_mut(g).range = range_new;
                self.groups[g] = Group::new(factor, members.clone());
                for (&f, c) in members.iter().zip(caches) {
                    self.fields[f] = c;
                }
            }
        }
    }

    /// Single-site random-walk updates of the latent path. A move at
    /// `(s, t)` changes the innovations `w_t(s)` and `w_{t+1}(s)` and, if
    /// the cell is observed, possibly the observation's piece.
    pub fn update_latent(&mut self) {
        let Some(copula) = self.state.copula.as_mut() else {
            return;
        };
        let corr = self.latent_corr.as_ref().expect("latent factor exists with a copula");
        let p = corr.precision();
        let grid = &self.data.spec.grid;
        let l_count = grid.pieces();
        let n = copula.v.len();
        let t_len = copula.n_time();
        let psi = copula.psi_v;
        let c = (1.0 - psi * psi).sqrt();
        let mut w_now: Vec<f64> = (0..n).map(|s| innovation(&copula.v, psi, s, 0)).collect();
        let mut w_next = vec![0.0; n];
        for t in 0..t_len {
            if t + 1 < t_len {
                for (s, w) in w_next.iter_mut().enumerate() {
                    *w = innovation(&copula.v, psi, s, t + 1);
                }
            }
            for s in 0..n {
                let old = copula.v[s][t];
                let new = self.props.latent.propose_scalar(old, &mut self.rng);
                let delta = new - old;
                let dw = if t == 0 { delta } else { delta / c };
                let pss = p[(s, s)];
                let pw: f64 = (0..n).map(|j| p[(s, j)] * w_now[j]).sum();
                let mut dprior = -(dw * pw + 0.5 * dw * dw * pss);
                let dw_next = -psi * delta / c;
                if t + 1 < t_len {
                    let pw: f64 = (0..n).map(|j| p[(s, j)] * w_next[j]).sum();
                    dprior += -(dw_next * pw + 0.5 * dw_next * dw_next * pss);
                }
                let mut dll = 0.0;
                let i = self.obs_at[s][t];
                if i != NO_OBS {
                    let (p_old, p_new) = (grid.piece_of_normal(old), grid.piece_of_normal(new));
                    if p_old != p_new {
                        let i = i as usize;
                        let y = self.data.stations[s].obs[i].y;
                        let sigma = &self.sig[s][i * l_count..(i + 1) * l_count];
                        let mu = self.mu[s][i];
                        dll = fast_piece_log_density(grid, mu, sigma, y, p_new)
                            - fast_piece_log_density(grid, mu, sigma, y, p_old);
                    }
                }
                let (alpha, ok) = metropolis(dll + dprior, &mut self.rng);
                self.props.latent.record(alpha, ok, self.burn_in);
                if ok {
                    copula.v[s][t] = new;
                    w_now[s] += dw;
                    if t + 1 < t_len {
                        w_next[s] += dw_next;
                    }
                    self.ll[s] += dll;
                    self.latent_lp += dprior;
                }
            }
            std::mem::swap(&mut w_now, &mut w_next);
        }
    }

    /// `ψ_v` by random walk (rejected outside (−1, 1)) and `ψ_w` by
    /// log-scale random walk, both against the latent-path density.
    pub fn update_copula_hypers(&mut self) {
        let prior = self.config.hyper_prior;
        let Some(copula) = self.state.copula.as_mut() else {
            return;
        };
        let corr = self.latent_corr.as_ref().expect("latent factor exists with a copula");
        let psi_new = self.props.psi_v.propose_scalar(copula.psi_v, &mut self.rng);
        if psi_new.abs() < 1.0 {
            let lp_new = latent_log_density(&copula.v, psi_new, corr);
            let (alpha, ok) = metropolis(lp_new - self.latent_lp, &mut self.rng);
            self.props.psi_v.record(alpha, ok, self.burn_in);
            if ok {
                copula.psi_v = psi_new;
                self.latent_lp = lp_new;
            }
        } else {
            self.props.psi_v.record(0.0, false, self.burn_in);
        }

        let step = self.props.psi_w.propose_scalar(0.0, &mut self.rng);
        let psi_w_new = copula.psi_w * step.exp();
        let factor = if prior.log_range(psi_w_new).is_finite() {
            innovation_factor(&self.data.locations(), psi_w_new).ok()
        } else {
            None
        };
        match factor {
            Some(f) => {
                let lp_new = latent_log_density(&copula.v, copula.psi_v, &f);
                let (alpha, ok) = metropolis(lp_new - self.latent_lp + step, &mut self.rng);
                self.props.psi_w.record(alpha, ok, self.burn_in);
                if ok {
                    copula.psi_w = psi_w_new;
                    self.latent_lp = lp_new;
                    self.latent_corr = Some(f);
                }
            }
            None => self.props.psi_w.record(0.0, false, self.burn_in),
        }
    }

    /// Snapshot of the current state for the posterior sample.
    pub fn sample(&self) -> PosteriorSample {
        PosteriorSample {
            iter: self.iter,
            coeffs: self.state.coeffs.clone(),
            beta_hyper: self.state.beta_hyper.clone(),
            theta_hyper: self.state.theta_hyper.clone(),
            psi_v: self.state.copula.as_ref().map(|c| c.psi_v),
            psi_w: self.state.copula.as_ref().map(|c| c.psi_w),
            log_post: self.state.log_post,
        }
    }

    /// Acceptance rate per block, after burn-in when anything was retained.
    pub fn acceptance(&self) -> Vec<BlockRate> {
        let spec = &self.data.spec;
        let mut out = Vec::new();
        for (s, st) in self.data.stations.iter().enumerate() {
            if self.config.update_coeffs {
                out.push(BlockRate::station(&st.station_id, "beta", self.props.beta[s].acceptance()));
                for (l, a) in self.props.theta[s].iter().enumerate() {
                    out.push(BlockRate::station(&st.station_id, &format!("theta{}", l + 1), a.acceptance()));
                }
            }
        }
        if self.config.update_hypers {
            let nb = self.n_beta();
            for g in 0..self.groups.len() {
                let slot = if g < nb {
                    format!("beta.{}", spec.beta_slots()[g].name())
                } else {
                    format!("theta.{}", spec.theta_slots()[g - nb].name())
                };
                for (k, a) in self.props.means[g].iter().enumerate() {
                    let name = if g < nb { format!("{slot}.mean") } else { format!("{slot}.mean{}", k + 1) };
                    out.push(BlockRate::global(&name, a.acceptance()));
                }
                out.push(BlockRate::global(&format!("{slot}.sill"), self.props.sill[g].acceptance()));
                out.push(BlockRate::global(&format!("{slot}.range"), self.props.range[g].acceptance()));
            }
        }
        if self.state.copula.is_some() {
            out.push(BlockRate::global("latent", self.props.latent.acceptance()));
            if self.config.update_hypers {
                out.push(BlockRate::global("psi_v", self.props.psi_v.acceptance()));
                out.push(BlockRate::global("psi_w", self.props.psi_w.acceptance()));
            }
        }
        out
    }

    /// Burn-in acceptance of each station's coefficient blocks, in the
    /// order `beta, theta1..L`.
    pub fn burn_in_acceptance(&self, station: usize) -> Vec<f64> {
        std::iter::once(self.props.beta[station].burn_in_acceptance())
            .chain(self.props.theta[station].iter().map(|a| a.burn_in_acceptance()))
            .collect()
    }

    pub fn into_state(self) -> ChainState {
        self.state
    }
}

struct StationInit {
    coeffs: QuantileCoeffs,
    beta_cov: DMatrix<f64>,
    theta_cov: DMatrix<f64>,
}

/// `s² (XᵀX)⁻¹`, or a diagonal fallback when the design is rank deficient.
fn scaled_inverse_gram(x: &DMatrix<f64>, s2: f64, fallback: f64) -> DMatrix<f64> {
    let p = x.ncols();
    let gram = x.transpose() * x;
    match gram.cholesky() {
        Some(c) => c.inverse() * s2,
        None => DMatrix::identity(p, p) * fallback,
    }
}

fn initial_station(spec: &ModelSpec, st: &StationData) -> Result<StationInit> {
    let nb = spec.beta_slots().len();
    let nt = spec.theta_slots().len();
    let l_count = spec.pieces();
    let n = st.obs.len();
    let mut coeffs = spec.zero_coeffs();
    let (mut s, beta_cov) = if n >= nb + 2 {
        let mut x = DMatrix::zeros(n, nb);
        let mut row = vec![0.0; nb];
        for (i, o) in st.obs.iter().enumerate() {
            spec.fill_beta_row(&st.covariates(o), &mut row);
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        let y: Vec<f64> = st.obs.iter().map(|o| o.y).collect();
        let names: Vec<String> = spec.beta_slots().iter().map(Slot::name).collect();
        let beta = least_squares(&x, &y, &names)
            .map_err(|e| Error::Initialization(format!("station {}: median start: {e}", st.station_id)))?;
        let fitted = &x * nalgebra::DVector::from_column_slice(&beta);
        let rss: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let s2 = rss / (n - nb) as f64;
        coeffs.beta = beta;
        (s2.sqrt(), scaled_inverse_gram(&x, s2, s2 / n as f64))
    } else {
        (1.0, DMatrix::identity(nb, nb))
    };
    if !(s > 0.0) {
        s = 1.0;
    }
    match spec.form {
        ModelForm::Full => {
            let i = spec.theta_index(Slot::Intercept).expect("full form has an intercept");
            for th in &mut coeffs.theta {
                th[i] = s;
            }
        }
        ModelForm::ReducedSigma => {
            let i = spec.theta_index(Slot::Sigma).expect("reduced form has a sigma slot");
            for th in &mut coeffs.theta {
                th[i] = 1.0;
            }
        }
    }
    let theta_cov = if n >= nt + 2 {
        let mut x = DMatrix::zeros(n, nt);
        let mut row = vec![0.0; nt];
        for (i, o) in st.obs.iter().enumerate() {
            spec.fill_theta_row(&st.covariates(o), &mut row);
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        let s2 = s * s * l_count as f64 / 2.0;
        scaled_inverse_gram(&x, s2, s2 / n as f64)
    } else {
        DMatrix::identity(nt, nt)
    };
    Ok(StationInit {
        coeffs,
        beta_cov,
        theta_cov,
    })
}

/// Latent start `v = Φ⁻¹(F(y))` at observed cells (clamped away from the
/// tails) and 0 elsewhere.
fn initial_copula(data: &FitData, coeffs: &[QuantileCoeffs], psi_v: f64, psi_w: f64) -> LatentCopula {
    let mut v = vec![vec![0.0; data.n_cells]; data.stations.len()];
    for (s, st) in data.stations.iter().enumerate() {
        for o in &st.obs {
            if let Ok(pq) = piecewise_params(&data.spec, &coeffs[s], &st.covariates(o)) {
                v[s][o.cell] = norm_quantile(pq.cdf(o.y).clamp(1e-6, 1.0 - 1e-6));
            }
        }
    }
    LatentCopula { psi_v, psi_w, v }
}
