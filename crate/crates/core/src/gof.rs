//! Goodness of fit: Monte Carlo ELBO, expected log-likelihood, LPDS, and
//! cross-validated grid search over the prior hyperparameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavi::{self, FitOptions};
use crate::error::{Error, Result};
use crate::model::{kl_q_prior, posterior_mean, sample_into, PriorConfig, VariationalParams};
use crate::numeric::log_sum_exp;
use crate::rng::{self, label};
use crate::survival::{c_index, prognostic_index, RiskIndex, SurvivalDataset};

/// Default number of Monte Carlo draws.
pub const DEFAULT_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub elbo: f64,
    /// `E_Q[l_p(D; β)]`, estimated.
    pub ell: f64,
    pub kl: f64,
    /// Concordance of the posterior-mean prognostic index; `None` without
    /// comparable pairs.
    pub c_index: Option<f64>,
    pub mc_samples: usize,
    /// Standard error of the `ell` estimate.
    pub mc_std_error: f64,
}

/// Partial log-likelihood at `B` draws from `Q`.
pub fn likelihood_draws(data: &SurvivalDataset, params: &VariationalParams, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("number of Monte Carlo samples must be at least 1".into()));
    }
    if params.p() != data.p() {
        return Err(Error::Dimension {
            what: "variational parameters".into(),
            expected: data.p(),
            found: params.p(),
        });
    }
    let index = RiskIndex::new(data)?;
    let x = data.design();
    let mut r = rng::stream(seed, &[label::ELBO]);
    let mut beta = vec![0.0; data.p()];
    let mut eta = vec![0.0; data.n()];
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        sample_into(params, &mut r, &mut beta);
        eta.iter_mut().for_each(|e| *e = 0.0);
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, &v) in eta.iter_mut().zip(x.column(j)) {
                    *e += b * v;
                }
            }
        }
        out.push(index.log_likelihood_eta(&eta));
    }
    Ok(out)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // Centering on the first value keeps a constant sample exact.
    let first = values[0];
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `ELBO = E_Q[l_p(D; β)] − KL(Q ‖ Π)` with the expectation estimated from
/// `samples` draws.
pub fn estimate_elbo(
    data: &SurvivalDataset,
    params: &VariationalParams,
    prior: &PriorConfig,
    samples: usize,
    seed: u64,
) -> Result<GofReport> {
    let draws = likelihood_draws(data, params, samples, seed)?;
    report(data, params, prior, &draws)
}

fn report(data: &SurvivalDataset, params: &VariationalParams, prior: &PriorConfig, draws: &[f64]) -> Result<GofReport> {
    let (ell, se) = mean_and_se(draws);
    let kl = kl_q_prior(params, prior);
    let eta = prognostic_index(data, &posterior_mean(params))?;
    Ok(GofReport {
        elbo: ell - kl,
        ell,
        kl,
        c_index: c_index(data, &eta)?,
        mc_samples: draws.len(),
        mc_std_error: se,
    })
}

/// `E_Q[l_p(D_test; β)]`, estimated.
pub fn expected_log_likelihood(test: &SurvivalDataset, params: &VariationalParams, samples: usize, seed: u64) -> Result<f64> {
    Ok(mean_and_se(&likelihood_draws(test, params, samples, seed)?).0)
}

/// `log E_Q[L_p(D_test; β)]`, estimated by log-mean-exp. Never below the
/// expected log-likelihood on the same draws.
pub fn log_predictive_density(test: &SurvivalDataset, params: &VariationalParams, samples: usize, seed: u64) -> Result<f64> {
    let draws = likelihood_draws(test, params, samples, seed)?;
    Ok(log_sum_exp(&draws) - (draws.len() as f64).ln())
}

/// Split observations into `folds` groups, stratified on event status.
pub fn stratified_folds(data: &SurvivalDataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if folds < 2 || folds > data.n() {
        return Err(Error::InvalidParameter(format!(
            "number of folds must lie in [2, n = {}], got {folds}",
            data.n()
        )));
    }
    let mut r = rng::stream(seed, &[label::FOLDS]);
    let mut events: Vec<usize> = (0..data.n()).filter(|&i| data.status()[i]).collect();
    let mut censored: Vec<usize> = (0..data.n()).filter(|&i| !data.status()[i]).collect();
    events.shuffle(&mut r);
    censored.shuffle(&mut r);
    let mut out = vec![Vec::new(); folds];
    // Censored observations continue the round-robin where events stopped
    // so fold sizes differ by at most one.
    for (k, &i) in events.iter().chain(&censored).enumerate() {
        out[k % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn folds_with_events(data: &SurvivalDataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let ok = |split: &[Vec<usize>]| split.iter().all(|f| f.iter().any(|&i| data.status()[i]));
    let first = stratified_folds(data, folds, seed)?;
    if ok(&first) {
        return Ok(first);
    }
    let second = stratified_folds(data, folds, rng::child_seed(seed, &[label::FOLDS]))?;
    if ok(&second) {
        return Ok(second);
    }
    Err(Error::InvalidData(format!(
        "could not split {} events into {folds} folds that each contain an event",
        data.n_events()
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub a0_grid: Vec<f64>,
    /// `b0` shared by every cell.
    pub b0: f64,
    pub fit: FitOptions,
    pub mc_samples: usize,
    pub seed: u64,
    /// Also report the log predictive density on each validation fold.
    pub lpds: bool,
}

/// One (cell, fold) evaluation on the validation fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub lambda: f64,
    pub a0: f64,
    pub fold: usize,
    /// Validation `ell − kl`.
    pub elbo: f64,
    pub ell: f64,
    pub kl: f64,
    pub c_index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpds: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Over the present values; `None` if there are none.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub lambda: f64,
    pub a0: f64,
    pub b0: f64,
    pub elbo: MeanSd,
    pub ell: MeanSd,
    pub kl: MeanSd,
    pub c_index: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub folds: Vec<FoldRecord>,
    pub cells: Vec<CellSummary>,
    /// Index into `cells` with the highest mean validation ELBO.
    pub recommended: usize,
}

impl GridSearch {
    pub fn recommended_cell(&self) -> &CellSummary {
        &self.cells[self.recommended]
    }
}

fn dedup(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// K-fold cross-validation over the `λ × a0` grid. Cells and folds run in
/// parallel on the current rayon pool.
pub fn grid_search(data: &SurvivalDataset, options: &GridOptions) -> Result<GridSearch> {
    let lambdas = dedup(&options.lambda_grid);
    let a0s = dedup(&options.a0_grid);
    if lambdas.is_empty() || a0s.is_empty() {
        return Err(Error::InvalidParameter("hyperparameter grids must be nonempty".into()));
    }
    let priors = lambdas
        .iter()
        .flat_map(|&l| a0s.iter().map(move |&a| (l, a)))
        .map(|(l, a)| PriorConfig::new(l, a, options.b0))
        .collect::<Result<Vec<_>>>()?;
    let folds = folds_with_events(data, options.folds, options.seed)?;
    let all: Vec<usize> = (0..data.n()).collect();
    let splits = folds
        .iter()
        .map(|val| {
            let train: Vec<usize> = all.iter().copied().filter(|i| val.binary_search(i).is_err()).collect();
            Ok((data.subset(&train)?, data.subset(val)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..priors.len())
        .flat_map(|c| (0..splits.len()).map(move |k| (c, k)))
        .collect();
    let folds: Vec<FoldRecord> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let prior = &priors[c];
            let (train, val) = &splits[k];
            let fitted = cavi::fit(train, prior, &options.fit)?;
            let seed = rng::child_seed(options.seed, &[label::CELL, c as u64, label::FOLDS, k as u64]);
            let draws = likelihood_draws(val, &fitted.params, options.mc_samples, seed)?;
            let r = report(val, &fitted.params, prior, &draws)?;
            let lpds = options
                .lpds
                .then(|| log_sum_exp(&draws) - (draws.len() as f64).ln());
            Ok(FoldRecord {
                lambda: prior.lambda,
                a0: prior.a0,
                fold: k,
                elbo: r.elbo,
                ell: r.ell,
                kl: r.kl,
                c_index: r.c_index,
                lpds,
                converged: fitted.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<CellSummary> = priors
        .iter()
        .enumerate()
        .map(|(c, prior)| {
            let rows = &folds[c * splits.len()..(c + 1) * splits.len()];
            let stat = |f: fn(&FoldRecord) -> f64| MeanSd::of(rows.iter().map(f)).expect("at least two folds");
            CellSummary {
                lambda: prior.lambda,
                a0: prior.a0,
                b0: prior.b0,
                elbo: stat(|r| r.elbo),
                ell: stat(|r| r.ell),
                kl: stat(|r| r.kl),
                c_index: MeanSd::of(rows.iter().filter_map(|r| r.c_index)),
            }
        })
        .collect();
    let recommended = cells
        .iter()
        .enumerate()
        .fold(0, |best, (c, cell)| if cell.elbo.mean > cells[best].elbo.mean { c } else { best });
    Ok(GridSearch {
        folds,
        cells,
        recommended,
    })
}
