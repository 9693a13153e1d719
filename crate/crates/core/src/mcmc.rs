//! Metropolis-within-Gibbs sampler for the spike-and-slab Cox model
//!
//! `β_j ~ Laplace(λ)`, `z_j | w_j ~ Bernoulli(w_j)`, `w_j ~ Beta(a0, b0)`,
//! with partial likelihood `L_p(D; β∘z)`. Each iteration redraws every
//! `w_j`, then every `z_j`, then every `β_j` (random-walk Metropolis).

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavi::FitDocument;
use crate::error::{Error, Result};
use crate::model::PriorConfig;
use crate::numeric::sigmoid;
use crate::rng::{self, label, StreamRng};
use crate::summaries::{credible_sets_from_draws, CredibleSet};
use crate::survival::{RiskIndex, SurvivalDataset};

/// Sweeps between full recomputations of the linear predictor.
const REFRESH_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    /// Proposal scale for an included coordinate.
    pub sigma_k: f64,
    /// Proposal inflation for an excluded coordinate.
    pub sigma_s: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 10_000,
            burn_in: 1_000,
            sigma_k: 0.2,
            sigma_s: 10.0,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidParameter(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.n_iter
            )));
        }
        for (name, v) in [("sigma_k", self.sigma_k), ("sigma_s", self.sigma_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Proposal standard deviation given the inclusion state.
    pub fn proposal_sd(&self, included: bool) -> f64 {
        if included {
            self.sigma_k
        } else {
            self.sigma_k * self.sigma_s
        }
    }
}

/// Post-burn-in draws, one row per stored iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcSamples {
    pub beta: Array2<f64>,
    pub z: Array2<u8>,
    pub w: Array2<f64>,
    /// Metropolis acceptance rate per coordinate over all iterations.
    pub acceptance_rate: Vec<f64>,
    /// Iteration number of the first stored row (1-based).
    pub first_iter: usize,
}

impl McmcSamples {
    pub fn len(&self) -> usize {
        self.beta.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p(&self) -> usize {
        self.beta.ncols()
    }

    /// Long-format CSV with header `iter,j,beta,z,w`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["iter", "j", "beta", "z", "w"])?;
        for s in 0..self.len() {
            let iter = (self.first_iter + s).to_string();
            for j in 0..self.p() {
                wtr.write_record([
                    iter.as_str(),
                    &j.to_string(),
                    &self.beta[[s, j]].to_string(),
                    &self.z[[s, j]].to_string(),
                    &self.w[[s, j]].to_string(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// One `Beta(a0, b0)` draw.
pub fn sample_w<R: Rng + ?Sized>(prior: &PriorConfig, rng: &mut R) -> f64 {
    Beta::new(prior.a0, prior.b0)
        .expect("validated prior shapes are positive")
        .sample(rng)
}

/// Current state of a chain with the linear predictor `η = X(β∘z)` cached.
#[derive(Debug, Clone)]
pub struct ChainState<'a> {
    data: &'a SurvivalDataset,
    index: RiskIndex,
    prior: PriorConfig,
    pub beta: Vec<f64>,
    pub z: Vec<bool>,
    pub w: Vec<f64>,
    eta: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ChainState<'a> {
    pub fn new(data: &'a SurvivalDataset, prior: &PriorConfig, beta: Vec<f64>, z: Vec<bool>, w: Vec<f64>) -> Result<Self> {
        prior.validate()?;
        let p = data.p();
        for (what, len) in [("beta", beta.len()), ("z", z.len()), ("w", w.len())] {
            if len != p {
                return Err(Error::Dimension {
                    what: what.into(),
                    expected: p,
                    found: len,
                });
            }
        }
        let mut state = Self {
            data,
            index: RiskIndex::new(data)?,
            prior: *prior,
            beta,
            z,
            w,
            eta: vec![0.0; data.n()],
            scratch: vec![0.0; data.n()],
        };
        state.refresh();
        Ok(state)
    }

    /// `w = w̄`, `z ~ Bernoulli(w̄)`, `β = 0`.
    pub fn prior_start<R: Rng + ?Sized>(data: &'a SurvivalDataset, prior: &PriorConfig, rng: &mut R) -> Result<Self> {
        let w_bar = prior.w_bar();
        let p = data.p();
        let z = (0..p).map(|_| rng.random::<f64>() < w_bar).collect();
        Self::new(data, prior, vec![0.0; p], z, vec![w_bar; p])
    }

    /// Recompute `η` from scratch.
    pub fn refresh(&mut self) {
        let x = self.data.design();
        self.eta.iter_mut().for_each(|e| *e = 0.0);
        for j in 0..self.data.p() {
            if self.z[j] && self.beta[j] != 0.0 {
                let b = self.beta[j];
                for (e, &v) in self.eta.iter_mut().zip(x.column(j)) {
                    *e += b * v;
                }
            }
        }
    }

    pub fn log_likelihood(&self) -> f64 {
        self.index.log_likelihood_eta(&self.eta)
    }

    /// Log-likelihood with coordinate `j`'s effective coefficient moved by `shift`.
    fn shifted_log_likelihood(&mut self, j: usize, shift: f64) -> f64 {
        let col = self.data.design().column(j);
        for ((s, &e), &v) in self.scratch.iter_mut().zip(&self.eta).zip(col) {
            *s = e + shift * v;
        }
        self.index.log_likelihood_eta(&self.scratch)
    }

    fn apply_shift(&mut self, j: usize, shift: f64) {
        if shift == 0.0 {
            return;
        }
        let col = self.data.design().column(j);
        for (e, &v) in self.eta.iter_mut().zip(col) {
            *e += shift * v;
        }
    }

    /// `P(z_j = 1 | D, β, z_{−j}, w)`.
    pub fn z_probability(&mut self, j: usize) -> f64 {
        let w = self.w[j];
        let b = self.beta[j];
        if b == 0.0 || self.data.design().column(j).iter().all(|&v| v == 0.0) {
            return w;
        }
        let current = self.log_likelihood();
        // η carries β_j only when z_j = 1.
        let (ll1, ll0) = if self.z[j] {
            (current, self.shifted_log_likelihood(j, -b))
        } else {
            (self.shifted_log_likelihood(j, b), current)
        };
        sigmoid(ll1 - ll0 + w.ln() - (-w).ln_1p())
    }

    pub fn sample_z<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> bool {
        let p1 = self.z_probability(j);
        let new = rng.random::<f64>() < p1;
        if new != self.z[j] {
            let b = self.beta[j];
            self.apply_shift(j, if new { b } else { -b });
            self.z[j] = new;
        }
        new
    }

    /// Metropolis acceptance probability for moving `β_j` to `proposal`
    /// under the proposal scale `sd`.
    pub fn acceptance_probability(&mut self, j: usize, proposal: f64, sd: f64) -> f64 {
        let current = self.beta[j];
        if proposal == current {
            return 1.0;
        }
        let log_lik_ratio = if self.z[j] {
            let ll_new = self.shifted_log_likelihood(j, proposal - current);
            ll_new - self.log_likelihood()
        } else {
            0.0
        };
        let log_prior_ratio = -self.prior.lambda * (proposal.abs() - current.abs());
        let log_kernel = |to: f64, from: f64| -0.5 * ((to - from) / sd).powi(2);
        let log_kernel_ratio = log_kernel(current, proposal) - log_kernel(proposal, current);
        let log_a = log_lik_ratio + log_prior_ratio + log_kernel_ratio;
        if log_a >= 0.0 {
            1.0
        } else {
            log_a.exp()
        }
    }

    /// One random-walk Metropolis step for `β_j`; returns whether it moved.
    pub fn sample_beta<R: Rng + ?Sized>(&mut self, j: usize, config: &McmcConfig, rng: &mut R) -> bool {
        let sd = config.proposal_sd(self.z[j]);
        let step: f64 = rng.sample(StandardNormal);
        let proposal = self.beta[j] + sd * step;
        let a = self.acceptance_probability(j, proposal, sd);
        let accept = a >= 1.0 || rng.random::<f64>() < a;
        if accept {
            if self.z[j] {
                self.apply_shift(j, proposal - self.beta[j]);
            }
            self.beta[j] = proposal;
        }
        accept
    }

    /// One full iteration: every `w_j`, then every `z_j`, then every `β_j`.
    /// Returns the number of accepted β moves per coordinate (0 or 1).
    pub fn sweep<R: Rng + ?Sized>(&mut self, config: &McmcConfig, rng: &mut R, accepted: &mut [usize]) {
        let p = self.data.p();
        for j in 0..p {
            self.w[j] = sample_w(&self.prior, rng);
        }
        for j in 0..p {
            self.sample_z(j, rng);
        }
        for j in 0..p {
            if self.sample_beta(j, config, rng) {
                accepted[j] += 1;
            }
        }
    }
}

fn run_with(data: &SurvivalDataset, prior: &PriorConfig, config: &McmcConfig, mut r: StreamRng) -> Result<McmcSamples> {
    config.validate()?;
    let p = data.p();
    let mut state = ChainState::prior_start(data, prior, &mut r)?;
    let kept = config.n_iter - config.burn_in;
    let mut beta = Array2::zeros((kept, p));
    let mut z = Array2::zeros((kept, p));
    let mut w = Array2::zeros((kept, p));
    let mut accepted = vec![0usize; p];
    for iter in 1..=config.n_iter {
        state.sweep(config, &mut r, &mut accepted);
        if iter % REFRESH_EVERY == 0 {
            state.refresh();
        }
        if iter > config.burn_in {
            let s = iter - config.burn_in - 1;
            for j in 0..p {
                beta[[s, j]] = state.beta[j];
                z[[s, j]] = u8::from(state.z[j]);
                w[[s, j]] = state.w[j];
            }
        }
    }
    Ok(McmcSamples {
        beta,
        z,
        w,
        acceptance_rate: accepted.iter().map(|&a| a as f64 / config.n_iter as f64).collect(),
        first_iter: config.burn_in + 1,
    })
}

/// Run one chain on the stream `(seed, [CHAIN, 0])`.
pub fn run_chain(data: &SurvivalDataset, prior: &PriorConfig, config: &McmcConfig) -> Result<McmcSamples> {
    run_with(data, prior, config, rng::stream(config.seed, &[label::CHAIN, 0]))
}

/// Run `chains` independent chains in parallel; chain `c` uses the stream
/// `(seed, [CHAIN, c])`, so chain 0 equals [`run_chain`].
pub fn run_chains(data: &SurvivalDataset, prior: &PriorConfig, config: &McmcConfig, chains: usize) -> Result<Vec<McmcSamples>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|c| run_with(data, prior, config, rng::stream(config.seed, &[label::CHAIN, c])))
        .collect()
}

/// Posterior summaries of a set of draws.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcSummary {
    /// Mean of `β_j z_j`.
    pub beta_hat: Vec<f64>,
    /// Mean of `z_j`.
    pub inclusion: Vec<f64>,
    /// Mean and standard deviation of `β_j` over draws with `z_j = 1`
    /// (0 when there are none).
    pub slab_mean: Vec<f64>,
    pub slab_sd: Vec<f64>,
    pub sets: Vec<CredibleSet>,
    pub acceptance_rate: Vec<f64>,
}

/// Summaries with credible sets at `level`, split by inclusion at
/// `threshold` and `1 − threshold`.
pub fn mcmc_summaries(samples: &McmcSamples, level: f64, threshold: f64) -> Result<McmcSummary> {
    if samples.is_empty() {
        return Err(Error::InvalidData("no stored MCMC samples".into()));
    }
    let n = samples.len() as f64;
    let p = samples.p();
    let mut beta_hat = vec![0.0; p];
    let mut inclusion = vec![0.0; p];
    let mut slab_mean = vec![0.0; p];
    let mut slab_sd = vec![0.0; p];
    let mut draws = Vec::with_capacity(p);
    for j in 0..p {
        let nonzero: Vec<f64> = (0..samples.len())
            .filter(|&s| samples.z[[s, j]] == 1)
            .map(|s| samples.beta[[s, j]])
            .collect();
        beta_hat[j] = nonzero.iter().sum::<f64>() / n;
        inclusion[j] = nonzero.len() as f64 / n;
        if !nonzero.is_empty() {
            let m = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
            slab_mean[j] = m;
            if nonzero.len() > 1 {
                slab_sd[j] =
                    (nonzero.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (nonzero.len() - 1) as f64).sqrt();
            }
        }
        draws.push(nonzero);
    }
    let sets = credible_sets_from_draws(&inclusion, &draws, level, threshold)?;
    Ok(McmcSummary {
        beta_hat,
        inclusion,
        slab_mean,
        slab_sd,
        sets,
        acceptance_rate: samples.acceptance_rate.clone(),
    })
}

/// JSON form: the fit document layout (slab mean/sd as `mu`/`sigma`,
/// inclusion frequency as `gamma`) plus the draw-based credible sets and
/// acceptance rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDocument {
    #[serde(flatten)]
    pub fit: FitDocument,
    pub sets: Vec<CredibleSet>,
    pub acceptance_rate: Vec<f64>,
}

impl McmcDocument {
    pub fn new(summary: &McmcSummary, prior: &PriorConfig, config: &McmcConfig) -> Self {
        Self {
            fit: FitDocument {
                mu: summary.slab_mean.clone(),
                sigma: summary.slab_sd.clone(),
                gamma: summary.inclusion.clone(),
                lambda: prior.lambda,
                a0: prior.a0,
                b0: prior.b0,
                beta_hat: summary.beta_hat.clone(),
                iterations: config.n_iter,
                converged: true,
                trace: Vec::new(),
            },
            sets: summary.sets.clone(),
            acceptance_rate: summary.acceptance_rate.clone(),
        }
    }
}
