//! Coordinate-ascent fitting of the variational family.
//!
//! Each sweep visits `j = 0..p` in order and updates `μ_j`, then `σ_j`,
//! then `γ_j`, holding every other coordinate fixed. The two continuous
//! updates are 1-D Brent searches; the inclusion probability has a closed
//! form. Iteration stops once the summed absolute parameter change of a
//! sweep falls below `tol`.

pub mod brent;
pub mod cache;
pub mod init;
pub mod objective;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gof;
use crate::model::{posterior_mean, PriorConfig, VariationalParams, GAMMA_CLAMP};
use crate::numeric::sigmoid;
use crate::survival::{RiskIndex, SurvivalDataset};

pub use brent::{brent_minimize, Minimum};
pub use cache::{FitProblem, SlabWeightCache};
pub use init::InitStrategy;
pub use objective::Coordinate;

/// Monte Carlo ELBO estimates recorded along the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTrace {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Threshold on `Σ_j |Δμ_j| + |Δσ_j| + |Δγ_j|` per sweep.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitStrategy,
    pub sigma_init: f64,
    pub gamma_init: f64,
    pub brent_tol: f64,
    /// Half-width of the `μ_j` search interval around its current value.
    pub brent_bracket: f64,
    /// `σ_j` search interval (searched on the log scale).
    pub sigma_bounds: (f64, f64),
    /// Initializer penalty as a fraction of the all-zero threshold `λ_max`.
    pub init_penalty_ratio: f64,
    pub init_max_iter: usize,
    /// Coordinate updates between full cache rebuilds (`None`: one per sweep).
    pub drift_budget: Option<usize>,
    pub elbo_trace: Option<ElboTrace>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 1000,
            init: InitStrategy::Lasso,
            sigma_init: 0.05,
            gamma_init: 0.5,
            brent_tol: 1e-6,
            brent_bracket: 5.0,
            sigma_bounds: (1e-4, 10.0),
            init_penalty_ratio: 0.01,
            init_max_iter: 500,
            drift_budget: None,
            elbo_trace: None,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.gamma_init > 0.0 && self.gamma_init < 1.0) {
            return bad(format!("gamma_init must lie in (0, 1), got {}", self.gamma_init));
        }
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return bad(format!("sigma_init must be positive, got {}", self.sigma_init));
        }
        if !(self.brent_tol > 0.0) {
            return bad(format!("brent_tol must be positive, got {}", self.brent_tol));
        }
        if !(self.brent_bracket > 0.0 && self.brent_bracket.is_finite()) {
            return bad(format!("brent_bracket must be positive, got {}", self.brent_bracket));
        }
        let (lo, hi) = self.sigma_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("invalid sigma bounds ({lo}, {hi})"));
        }
        if !(self.init_penalty_ratio > 0.0) {
            return bad(format!("init_penalty_ratio must be positive, got {}", self.init_penalty_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elbo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: VariationalParams,
    pub prior: PriorConfig,
    pub beta_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// One entry per sweep; with ELBO tracing on, a leading `iter = 0`
    /// entry holds the estimate at initialization.
    pub trace: Vec<TraceEntry>,
}

/// JSON form of [`FitResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
    pub a0: f64,
    pub b0: f64,
    pub beta_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl From<&FitResult> for FitDocument {
    fn from(r: &FitResult) -> Self {
        Self {
            mu: r.params.mu.clone(),
            sigma: r.params.sigma.clone(),
            gamma: r.params.gamma.clone(),
            lambda: r.prior.lambda,
            a0: r.prior.a0,
            b0: r.prior.b0,
            beta_hat: r.beta_hat.clone(),
            iterations: r.iterations,
            converged: r.converged,
            trace: r.trace.clone(),
        }
    }
}

impl TryFrom<FitDocument> for FitResult {
    type Error = Error;

    fn try_from(d: FitDocument) -> Result<Self> {
        let params = VariationalParams::new(d.mu, d.sigma, d.gamma)?;
        let prior = PriorConfig::new(d.lambda, d.a0, d.b0)?;
        if d.beta_hat.len() != params.p() {
            return Err(Error::Dimension {
                what: "beta_hat".into(),
                expected: params.p(),
                found: d.beta_hat.len(),
            });
        }
        Ok(Self {
            params,
            prior,
            beta_hat: d.beta_hat,
            iterations: d.iterations,
            converged: d.converged,
            trace: d.trace,
        })
    }
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FitDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FitResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = FitDocument::deserialize(d)?;
        FitResult::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Starting parameters: `σ = sigma_init`, `γ = gamma_init` everywhere and
/// `μ` from the configured strategy.
pub fn initialize(data: &SurvivalDataset, options: &FitOptions, prior: &PriorConfig) -> Result<VariationalParams> {
    options.validate()?;
    prior.validate()?;
    let p = data.p();
    let mu = match &options.init {
        InitStrategy::Zero => vec![0.0; p],
        InitStrategy::File(v) => {
            if v.len() != p {
                return Err(Error::Dimension {
                    what: "initial mu".into(),
                    expected: p,
                    found: v.len(),
                });
            }
            v.clone()
        }
        InitStrategy::Lasso | InitStrategy::Ridge => {
            let index = RiskIndex::new(data)?;
            let lik = init::CoxLikelihood::new(data, &index);
            let penalty = options.init_penalty_ratio * lik.lambda_max();
            if options.init == InitStrategy::Lasso {
                init::lasso(&lik, penalty, options.init_max_iter)
            } else {
                init::ridge(&lik, penalty.max(1e-8), options.init_max_iter.min(100))?
            }
        }
    };
    VariationalParams::new(mu, vec![options.sigma_init; p], vec![options.gamma_init; p])
}

/// Run coordinate ascent from [`initialize`].
pub fn fit(data: &SurvivalDataset, prior: &PriorConfig, options: &FitOptions) -> Result<FitResult> {
    let start = initialize(data, options, prior)?;
    fit_from(data, prior, options, start)
}

/// Run coordinate ascent from the given starting parameters.
pub fn fit_from(
    data: &SurvivalDataset,
    prior: &PriorConfig,
    options: &FitOptions,
    start: VariationalParams,
) -> Result<FitResult> {
    options.validate()?;
    prior.validate()?;
    start.validate()?;
    if start.p() != data.p() {
        return Err(Error::Dimension {
            what: "starting parameters".into(),
            expected: data.p(),
            found: start.p(),
        });
    }
    let problem = FitProblem::new(data)?;
    let p = data.p();
    let mut params = start;
    let mut cache = SlabWeightCache::new(&problem, &params, options.drift_budget.unwrap_or(p.max(1)));
    let mut trace = Vec::new();
    let elbo_at = |params: &VariationalParams| -> Result<Option<f64>> {
        options
            .elbo_trace
            .map(|t| gof::estimate_elbo(data, params, prior, t.samples, t.seed).map(|r| r.elbo))
            .transpose()
    };
    if options.elbo_trace.is_some() {
        trace.push(TraceEntry {
            iter: 0,
            delta: 0.0,
            elbo: elbo_at(&params)?,
        });
    }

    let (log_lo, log_hi) = (options.sigma_bounds.0.ln(), options.sigma_bounds.1.ln());
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=options.max_iter {
        let mut delta = 0.0;
        for j in 0..p {
            if cache.needs_rebuild() {
                cache.rebuild(&problem, &params);
            }
            let wrap = |source: Error| Error::Fit {
                iteration: iter,
                coordinate: j,
                source: Box::new(source),
            };
            cache.exclude(&problem, &params, j);
            let coord = Coordinate::new(&problem, cache.excluded(), prior, j);
            let (mu_old, sigma_old, gamma_old) = (params.mu[j], params.sigma[j], params.gamma[j]);

            let mu = brent_minimize(
                |m| coord.objective_mu(m, sigma_old),
                mu_old - options.brent_bracket,
                mu_old + options.brent_bracket,
                options.brent_tol,
            )
            .map_err(wrap)?
            .x;
            let log_sigma = brent_minimize(
                |ls| coord.objective_sigma_unchecked(ls.exp(), mu),
                log_lo,
                log_hi,
                options.brent_tol,
            )
            .map_err(wrap)?
            .x;
            let sigma = log_sigma.exp();
            let zeta = coord.gamma_logit(mu, sigma);
            if zeta.is_nan() {
                return Err(wrap(Error::NonFinite {
                    what: "inclusion log-odds".into(),
                    at: zeta,
                }));
            }
            let gamma = sigmoid(zeta).clamp(GAMMA_CLAMP, 1.0 - GAMMA_CLAMP);

            delta += (mu - mu_old).abs() + (sigma - sigma_old).abs() + (gamma - gamma_old).abs();
            params.mu[j] = mu;
            params.sigma[j] = sigma;
            params.gamma[j] = gamma;
            cache.include(&problem, &params, j);
        }
        iterations = iter;
        trace.push(TraceEntry {
            iter,
            delta,
            elbo: elbo_at(&params)?,
        });
        if delta < options.tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        beta_hat: posterior_mean(&params),
        params,
        prior: *prior,
        iterations,
        converged,
        trace,
    })
}
