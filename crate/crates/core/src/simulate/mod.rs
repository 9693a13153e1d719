//! Synthetic survival data: sparse coefficients, Gaussian or user-supplied
//! designs, exponential event times with unit baseline hazard, and uniform
//! censoring.

pub mod metrics;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, label};
use crate::survival::SurvivalDataset;

pub use metrics::{evaluate, MetricsReport};

/// Where the design matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Setting {
    /// iid standard normal entries.
    Independent,
    /// Gaussian rows, unit variances, correlation `rho` inside consecutive
    /// blocks of `block_size` columns and independence across blocks.
    Block { rho: f64, block_size: usize },
    /// The first `n` rows of a given matrix.
    External(Array2<f64>),
}

impl Setting {
    pub fn block() -> Self {
        Setting::Block {
            rho: 0.6,
            block_size: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Number of nonzero coefficients.
    pub s: usize,
    /// Expected censoring proportion.
    pub c: f64,
    pub setting: Setting,
    pub coef_low: f64,
    pub coef_high: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, p: usize, s: usize, c: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            s,
            c,
            setting: Setting::Independent,
            coef_low: 0.5,
            coef_high: 2.0,
            seed,
        }
    }

    pub fn with_setting(mut self, setting: Setting) -> Self {
        self.setting = setting;
        self
    }

    /// The same configuration on replicate `r`'s seed.
    pub fn replicate(&self, r: u64) -> Self {
        Self {
            seed: rng::child_seed(self.seed, &[label::REPLICATE, r]),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 || self.p == 0 {
            return bad(format!("n and p must be positive, got n = {}, p = {}", self.n, self.p));
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if !(0.0..1.0).contains(&self.c) {
            return bad(format!("censoring proportion must lie in [0, 1), got {}", self.c));
        }
        if !(self.coef_low > 0.0 && self.coef_low <= self.coef_high && self.coef_high.is_finite()) {
            return bad(format!("invalid coefficient range [{}, {}]", self.coef_low, self.coef_high));
        }
        match &self.setting {
            Setting::Independent => {}
            Setting::Block { rho, block_size } => {
                if !(0.0..1.0).contains(rho) {
                    return bad(format!("rho must lie in [0, 1), got {rho}"));
                }
                if *block_size == 0 || self.p % block_size != 0 {
                    return bad(format!("block size {block_size} must divide p = {}", self.p));
                }
            }
            Setting::External(x) => {
                if x.ncols() != self.p {
                    return Err(Error::Dimension {
                        what: "external design columns".into(),
                        expected: self.p,
                        found: x.ncols(),
                    });
                }
                if x.nrows() < self.n {
                    return Err(Error::Dimension {
                        what: "external design rows".into(),
                        expected: self.n,
                        found: x.nrows(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta0: Vec<f64>,
    /// Indices of the nonzero coefficients, ascending.
    pub support: Vec<usize>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        let p = self.beta0.len();
        if let Some(&j) = self.support.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidData(format!("support index {j} out of range for p = {p}")));
        }
        let nonzero: Vec<usize> = (0..p).filter(|&j| self.beta0[j] != 0.0).collect();
        let mut support = self.support.clone();
        support.sort_unstable();
        if nonzero != support {
            return Err(Error::InvalidData("support does not match the nonzero entries of beta0".into()));
        }
        Ok(())
    }
}

/// `s` indices uniformly without replacement, each with a uniform random
/// sign and magnitude uniform on `[coef_low, coef_high]`.
pub fn draw_coefficients<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> GroundTruth {
    let mut support = index::sample(rng, config.p, config.s).into_vec();
    support.sort_unstable();
    let mut beta0 = vec![0.0; config.p];
    for &j in &support {
        let magnitude = rng.random_range(config.coef_low..=config.coef_high);
        beta0[j] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    GroundTruth { beta0, support }
}

pub fn draw_design<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Array2<f64>> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    match &config.setting {
        Setting::Independent => Ok(Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))),
        Setting::Block { rho, block_size } => {
            let b = *block_size;
            let sigma = DMatrix::from_fn(b, b, |i, j| if i == j { 1.0 } else { *rho });
            let l = sigma
                .cholesky()
                .ok_or_else(|| Error::InvalidParameter(format!("block correlation {rho} is not positive definite")))?
                .l();
            let mut x = Array2::zeros((n, p));
            let mut z = vec![0.0; b];
            for i in 0..n {
                for block in 0..p / b {
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    for a in 0..b {
                        x[[i, block * b + a]] = (0..=a).map(|k| l[(a, k)] * z[k]).sum();
                    }
                }
            }
            Ok(x)
        }
        Setting::External(x) => Ok(x.slice(ndarray::s![..n, ..]).to_owned()),
    }
}

/// Event times with hazard `exp(β0ᵀx_i)`; each subject is censored with
/// probability `c`, its time replaced by a uniform draw on `(0, t_i)`.
pub fn draw_survival<R: Rng + ?Sized>(
    config: &SimConfig,
    truth: &GroundTruth,
    design: &Array2<f64>,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    if design.ncols() != truth.beta0.len() {
        return Err(Error::Dimension {
            what: "design columns".into(),
            expected: truth.beta0.len(),
            found: design.ncols(),
        });
    }
    let n = design.nrows();
    let mut times = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let eta: f64 = design.row(i).iter().zip(&truth.beta0).map(|(x, b)| x * b).sum();
        let u: f64 = rng.sample(Open01);
        let t = -u.ln() * (-eta).exp();
        let d: f64 = rng.random();
        let event = d > config.c;
        if event {
            times.push(t);
        } else {
            let v: f64 = rng.sample(Open01);
            times.push(v * t);
        }
        status.push(event);
    }
    SurvivalDataset::new(times, status, design.clone())
}

/// Coefficients, design and outcomes, each from its own stream of `seed`.
pub fn simulate(config: &SimConfig) -> Result<(SurvivalDataset, GroundTruth)> {
    config.validate()?;
    let truth = draw_coefficients(config, &mut rng::stream(config.seed, &[label::COEFFICIENTS]));
    let design = draw_design(config, &mut rng::stream(config.seed, &[label::DESIGN]))?;
    let data = draw_survival(config, &truth, &design, &mut rng::stream(config.seed, &[label::SURVIVAL]))?;
    Ok((data, truth))
}
