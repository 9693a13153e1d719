//! Sparse variational Bayes for Cox proportional hazards regression.
//!
//! The posterior over regression coefficients under a spike-and-slab prior
//! (Laplace slab, Beta-distributed inclusion weights) is approximated by a
//! mean-field family `γ_j·N(μ_j, σ_j²) + (1 − γ_j)·δ₀`, fitted by coordinate
//! ascent on a Jensen bound of the partial-likelihood ELBO.
//!
//! ```
//! use survival_svb::{cavi, simulate, PriorConfig};
//!
//! let config = simulate::SimConfig::new(60, 10, 2, 0.25, 7);
//! let (data, truth) = simulate::simulate(&config)?;
//! let fit = cavi::fit(&data, &PriorConfig::default_for(data.p()), &cavi::FitOptions::default())?;
//! assert_eq!(fit.beta_hat.len(), truth.beta0.len());
//! # Ok::<(), survival_svb::Error>(())
//! ```
//!
//! Modules, bottom up:
//!
//! - [`survival`]: datasets, risk sets, partial likelihood, concordance.
//! - [`model`]: prior, variational family, closed-form kernels.
//! - [`cavi`]: the fitting loop and its initializers.
//! - [`gof`]: Monte Carlo ELBO, predictive scores, grid search.
//! - [`mcmc`]: a Metropolis-within-Gibbs reference sampler.
//! - [`simulate`]: synthetic data and accuracy metrics.
//! - [`summaries`]: credible sets, FDR-controlled selection, risk comparisons.

pub mod cavi;
pub mod error;
pub mod gof;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod summaries;
pub mod survival;

pub use cavi::{fit, FitOptions, FitResult, InitStrategy};
pub use error::{Error, Result};
pub use model::{PriorConfig, VariationalParams};
pub use survival::{RiskIndex, SurvivalDataset};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/partial-likelihood.md")]
    mod partial_likelihood {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/goodness-of-fit.md")]
    mod goodness_of_fit {}
    #[doc = include_str!("../../../book/src/mcmc.md")]
    mod mcmc {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/summaries.md")]
    mod summaries {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
