//! Spike-and-slab prior, the mean-field variational family, and the
//! closed-form kernels both of them need.
//!
//! The prior on each coefficient is `w̄·Laplace(λ) + (1 − w̄)·δ₀` once the
//! Beta(a0, b0) inclusion weight is integrated out, with `w̄ = a0/(a0+b0)`.
//! The variational distribution is `γ_j·N(μ_j, σ_j²) + (1 − γ_j)·δ₀`,
//! independently across coordinates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{normal_cdf, xlogx_ratio, SQRT_2_OVER_PI};
use crate::rng;

/// Inclusion probabilities produced by the fitting loop are kept inside
/// `[GAMMA_CLAMP, 1 − GAMMA_CLAMP]`.
pub const GAMMA_CLAMP: f64 = 1e-12;

/// Hyperparameters of the spike-and-slab prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Laplace slab rate.
    pub lambda: f64,
    /// Beta shape for the inclusion weight.
    pub a0: f64,
    pub b0: f64,
}

impl PriorConfig {
    pub fn new(lambda: f64, a0: f64, b0: f64) -> Result<Self> {
        let prior = Self { lambda, a0, b0 };
        prior.validate()?;
        Ok(prior)
    }

    /// `λ = 1, a0 = 1, b0 = p`.
    pub fn default_for(p: usize) -> Self {
        Self {
            lambda: 1.0,
            a0: 1.0,
            b0: p as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("a0", self.a0), ("b0", self.b0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Prior mean inclusion weight `a0 / (a0 + b0)`.
    pub fn w_bar(&self) -> f64 {
        self.a0 / (self.a0 + self.b0)
    }
}

/// Per-coordinate parameters `(μ_j, σ_j, γ_j)` of the variational family.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl VariationalParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let params = Self { mu, sigma, gamma };
        params.validate()?;
        Ok(params)
    }

    /// Same value for every coordinate.
    pub fn constant(p: usize, mu: f64, sigma: f64, gamma: f64) -> Result<Self> {
        Self::new(vec![mu; p], vec![sigma; p], vec![gamma; p])
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mu.len();
        for (what, len) in [("sigma", self.sigma.len()), ("gamma", self.gamma.len())] {
            if len != p {
                return Err(Error::Dimension {
                    what: what.into(),
                    expected: p,
                    found: len,
                });
            }
        }
        if let Some(m) = self.mu.iter().find(|m| !m.is_finite()) {
            return Err(Error::NonFinite {
                what: "mu".into(),
                at: *m,
            });
        }
        if let Some(s) = self.sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {s}")));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {g}")));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
}

/// JSON form of a variational fit: the three parameter arrays plus the
/// prior they were fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
    pub a0: f64,
    pub b0: f64,
}

impl ParamsDocument {
    pub fn new(params: &VariationalParams, prior: &PriorConfig) -> Self {
        Self {
            mu: params.mu.clone(),
            sigma: params.sigma.clone(),
            gamma: params.gamma.clone(),
            lambda: prior.lambda,
            a0: prior.a0,
            b0: prior.b0,
        }
    }

    pub fn split(self) -> Result<(VariationalParams, PriorConfig)> {
        let prior = PriorConfig::new(self.lambda, self.a0, self.b0)?;
        let params = VariationalParams::new(self.mu, self.sigma, self.gamma)?;
        Ok((params, prior))
    }
}

/// `E|X|` for `X ~ N(μ, σ²)`.
pub fn folded_normal_mean(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(folded_mean(mu, sigma))
}

#[inline]
pub(crate) fn folded_mean(mu: f64, sigma: f64) -> f64 {
    let m = mu.abs();
    let r = m / sigma;
    sigma * SQRT_2_OVER_PI * (-0.5 * r * r).exp() + m * (1.0 - 2.0 * normal_cdf(-r))
}

/// `log M(x, μ, σ) = μx + σ²x²/2`, the log moment generating function of
/// the slab evaluated at `x`.
#[inline]
pub fn log_slab_moment(x: f64, mu: f64, sigma: f64) -> f64 {
    mu * x + 0.5 * sigma * sigma * x * x
}

/// `log(γ·e^{log_m} + 1 − γ)`: one coordinate's factor of `E_Q[e^{βᵀx}]`.
#[inline]
pub fn log_mixture_factor(gamma: f64, log_m: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    if gamma >= 1.0 {
        return log_m;
    }
    let slab = gamma.ln() + log_m;
    let spike = (-gamma).ln_1p();
    let (hi, lo) = if slab > spike { (slab, spike) } else { (spike, slab) };
    hi + (lo - hi).exp().ln_1p()
}

/// `KL(N(μ, σ²) ‖ Laplace(λ))`.
pub fn slab_kl(mu: f64, sigma: f64, lambda: f64) -> f64 {
    lambda * folded_mean(mu, sigma) + (SQRT_2_OVER_PI / (sigma * lambda)).ln() - 0.5
}

/// Closed-form `KL(Q ‖ Π)` between the variational distribution and the
/// marginal spike-and-slab prior, using `0·log 0 = 0` at `γ_j ∈ {0, 1}`.
pub fn kl_q_prior(params: &VariationalParams, prior: &PriorConfig) -> f64 {
    let w_bar = prior.w_bar();
    (0..params.p())
        .map(|j| {
            let g = params.gamma[j];
            let slab = if g > 0.0 {
                g * slab_kl(params.mu[j], params.sigma[j], prior.lambda) + xlogx_ratio(g, w_bar)
            } else {
                0.0
            };
            slab + xlogx_ratio(1.0 - g, 1.0 - w_bar)
        })
        .sum()
}

/// One draw `β ~ Q`.
pub fn sample_from_q<R: Rng + ?Sized>(params: &VariationalParams, rng: &mut R) -> Vec<f64> {
    let mut beta = vec![0.0; params.p()];
    sample_into(params, rng, &mut beta);
    beta
}

/// One draw from a seed (stream [`rng::label::ELBO`]).
pub fn sample_from_q_seeded(params: &VariationalParams, seed: u64) -> Vec<f64> {
    sample_from_q(params, &mut rng::stream(seed, &[rng::label::ELBO]))
}

pub(crate) fn sample_into<R: Rng + ?Sized>(params: &VariationalParams, rng: &mut R, out: &mut [f64]) {
    for (j, b) in out.iter_mut().enumerate() {
        let u: f64 = rng.random();
        *b = if u < params.gamma[j] {
            let z: f64 = rng.sample(StandardNormal);
            params.mu[j] + params.sigma[j] * z
        } else {
            0.0
        };
    }
}

/// `E_Q[β_j] = γ_j μ_j`.
pub fn posterior_mean(params: &VariationalParams) -> Vec<f64> {
    params.gamma.iter().zip(&params.mu).map(|(g, m)| g * m).collect()
}
