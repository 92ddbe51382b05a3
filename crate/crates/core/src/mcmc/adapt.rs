//! Adaptive random-walk proposals.
//!
//! During burn-in the log step size follows a Robbins–Monro recursion toward
//! the target acceptance rate, and the proposal shape is periodically reset
//! to the empirical covariance of the block's own trace. Both freeze when
//! burn-in ends, so the retained chain is a plain Metropolis chain.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub(crate) struct Adaptive {
    dim: usize,
    /// Lower Cholesky factor of the proposal shape.
    shape: DMatrix<f64>,
    log_scale: f64,
    adapt: bool,
    target: f64,
    rm_steps: u64,
    burn_proposed: u64,
    burn_accepted: u64,
    proposed: u64,
    accepted: u64,
    // Running moments of the trace during burn-in.
    seen: usize,
    mean: Vec<f64>,
    comoment: DMatrix<f64>,
    next_reshape: usize,
}

impl Adaptive {
    /// `cov` is the initial proposal shape; `multiplier` scales the usual
    /// `2.38/√d` step (0 freezes the chain in place).
    pub fn new(cov: DMatrix<f64>, multiplier: f64, adapt: bool, target: f64) -> Self {
        let dim = cov.nrows();
        let shape = factor(&cov).unwrap_or_else(|| DMatrix::identity(dim, dim));
        Adaptive {
            dim,
            shape,
            log_scale: (multiplier * default_scale(dim)).ln(),
            adapt,
            target,
            rm_steps: 0,
            burn_proposed: 0,
            burn_accepted: 0,
            proposed: 0,
            accepted: 0,
            seen: 0,
            mean: vec![0.0; dim],
            comoment: DMatrix::zeros(dim, dim),
            next_reshape: 100.max(4 * dim),
        }
    }

    pub fn scalar(sd: f64, multiplier: f64, adapt: bool, target: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, sd * sd), multiplier, adapt, target)
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        let scale = self.log_scale.exp();
        if scale == 0.0 {
            return;
        }
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..self.dim {
            let mut step = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                step += self.shape[(i, j)] * zj;
            }
            out[i] += scale * step;
        }
    }

    pub fn propose_scalar<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        x + self.log_scale.exp() * self.shape[(0, 0)] * z
    }

    /// Records the outcome of one proposal with acceptance probability
    /// `alpha`.
    pub fn record(&mut self, alpha: f64, accepted: bool, burn_in: bool) {
        if burn_in {
            self.burn_proposed += 1;
            self.burn_accepted += u64::from(accepted);
            if self.adapt && self.log_scale.is_finite() {
                self.rm_steps += 1;
                let gain = (self.rm_steps as f64 + 1.0).powf(-0.6);
                self.log_scale += gain * (alpha - self.target);
            }
        } else {
            self.proposed += 1;
            self.accepted += u64::from(accepted);
        }
    }

    /// Feeds the current block value into the running covariance during
    /// burn-in and occasionally reshapes the proposal.
    pub fn observe(&mut self, x: &[f64]) {
        if !self.adapt || self.dim < 2 {
            return;
        }
        self.seen += 1;
        let n = self.seen as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.comoment[(i, j)] += delta[i] * (x[j] - self.mean[j]);
            }
        }
        if self.seen == self.next_reshape && self.log_scale.is_finite() {
            self.next_reshape *= 2;
            let cov = &self.comoment / (n - 1.0);
            let ridge = 1e-10 * cov.trace().max(1e-300) / self.dim as f64;
            let cov = cov + DMatrix::identity(self.dim, self.dim) * ridge;
            if let Some(l) = factor(&cov) {
                self.shape = l;
                self.log_scale = default_scale(self.dim).ln();
            }
        }
    }

    /// Acceptance rate after burn-in, or during burn-in if nothing was
    /// retained.
    pub fn acceptance(&self) -> f64 {
        if self.proposed > 0 {
            self.accepted as f64 / self.proposed as f64
        } else if self.burn_proposed > 0 {
            self.burn_accepted as f64 / self.burn_proposed as f64
        } else {
            f64::NAN
        }
    }

    pub fn burn_in_acceptance(&self) -> f64 {
        self.burn_accepted as f64 / self.burn_proposed.max(1) as f64
    }
}

fn default_scale(dim: usize) -> f64 {
    2.38 / (dim as f64).sqrt()
}

fn factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if cov.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(cov.clone()).map(|c| c.l())
}
