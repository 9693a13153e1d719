//! Surrogate objectives for a single coordinate `j`.
//!
//! Each is built from the risk-set term
//! `D(μ_j, σ_j) = Σ_{events i} log Σ_{r∈R(t_i)} M(x_rj, μ_j, σ_j)·P_j(x_r)`,
//! an upper bound (by Jensen) on `E_Q[log Σ_r exp(βᵀx_r) | z_j = 1]`.

use super::cache::FitProblem;
use crate::error::{Error, Result};
use crate::model::{folded_mean, PriorConfig};
use crate::numeric::SQRT_2_OVER_PI;

/// Everything needed to evaluate the coordinate-`j` objectives: the sorted
/// problem, `log P_j` at every sorted position, and the prior.
#[derive(Debug, Clone, Copy)]
pub struct Coordinate<'a> {
    pub problem: &'a FitProblem,
    pub log_p: &'a [f64],
    pub prior: &'a PriorConfig,
    pub j: usize,
}

impl<'a> Coordinate<'a> {
    pub fn new(problem: &'a FitProblem, log_p: &'a [f64], prior: &'a PriorConfig, j: usize) -> Self {
        Self {
            problem,
            log_p,
            prior,
            j,
        }
    }

    /// `D(μ, σ)`.
    pub fn risk_term(&self, mu: f64, sigma: f64) -> f64 {
        let x = self.problem.column(self.j);
        let half_var = 0.5 * sigma * sigma;
        let log_p = self.log_p;
        self.problem
            .risk_lse(|r| (mu + half_var * x[r]) * x[r] + log_p[r])
    }

    /// `Σ_{events} log Σ_{R(t_i)} P_j(x_r)`: the risk term with coordinate
    /// `j` in its spike state.
    pub fn spike_risk_term(&self) -> f64 {
        let log_p = self.log_p;
        self.problem.risk_lse(|r| log_p[r])
    }

    fn penalty(&self, mu: f64, sigma: f64) -> f64 {
        self.prior.lambda * folded_mean(mu, sigma)
    }

    /// `f(μ_j)`: the objective minimized by the `μ_j` update, at fixed `σ_j`.
    pub fn objective_mu(&self, mu: f64, sigma: f64) -> f64 {
        self.risk_term(mu, sigma) - mu * self.problem.event_x_sum(self.j) + self.penalty(mu, sigma)
    }

    /// `g(σ_j)`: the objective minimized by the `σ_j` update, at fixed `μ_j`.
    pub fn objective_sigma(&self, sigma: f64, mu: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(self.objective_sigma_unchecked(sigma, mu))
    }

    #[inline]
    pub(crate) fn objective_sigma_unchecked(&self, sigma: f64, mu: f64) -> f64 {
        self.risk_term(mu, sigma) + self.penalty(mu, sigma) - sigma.ln()
    }

    /// `ζ`, the log-odds the `γ_j` update sets: `γ_j = sigmoid(ζ)`.
    pub fn gamma_logit(&self, mu: f64, sigma: f64) -> f64 {
        let prior = self.prior;
        let slab = self.penalty(mu, sigma) + (SQRT_2_OVER_PI / (sigma * prior.lambda)).ln();
        let data = self.risk_term(mu, sigma) - self.spike_risk_term() - mu * self.problem.event_x_sum(self.j);
        0.5 + (prior.a0 / prior.b0).ln() - (slab + data)
    }
}

#[cfg(test)]
mod tests {
    use super::super::cache::SlabWeightCache;
    use super::*;
    use crate::model::VariationalParams;
    use crate::numeric::normal_cdf;
    use crate::survival::SurvivalDataset;
    use ndarray::{array, Array2};

    /// Straight-line evaluation over the raw dataset, no sorting or caching.
    fn oracle_risk_term(data: &SurvivalDataset, params: &VariationalParams, j: usize, mu: f64, sigma: f64) -> f64 {
        let (n, p) = (data.n(), data.p());
        let x = data.design();
        let t = data.times();
        let log_weight = |r: usize| -> f64 {
            let mut w = mu * x[[r, j]] + 0.5 * sigma * sigma * x[[r, j]].powi(2);
            for k in (0..p).filter(|&k| k != j) {
                let m = (params.mu[k] * x[[r, k]] + 0.5 * params.sigma[k].powi(2) * x[[r, k]].powi(2)).exp();
                w += (params.gamma[k] * m + 1.0 - params.gamma[k]).ln();
            }
            w
        };
        (0..n)
            .filter(|&i| data.status()[i])
            .map(|i| {
                (0..n)
                    .filter(|&r| t[r] >= t[i])
                    .map(|r| log_weight(r).exp())
                    .sum::<f64>()
                    .ln()
            })
            .sum()
    }

    fn oracle_folded(mu: f64, sigma: f64) -> f64 {
        sigma * (2.0 / std::f64::consts::PI).sqrt() * (-mu * mu / (2.0 * sigma * sigma)).exp()
            + mu * (1.0 - 2.0 * normal_cdf(-mu / sigma))
    }

    fn setup(data: &SurvivalDataset, params: &VariationalParams, j: usize) -> (FitProblem, Vec<f64>) {
        let problem = FitProblem::new(data).unwrap();
        let mut cache = SlabWeightCache::new(&problem, params, usize::MAX);
        let log_p = cache.exclude(&problem, params, j).to_vec();
        (problem, log_p)
    }

    fn three_obs() -> (SurvivalDataset, VariationalParams) {
        let data = SurvivalDataset::new(
            vec![2.0, 0.7, 1.3],
            vec![true, true, false],
            array![[0.4, -1.1], [1.7, 0.3], [-0.6, 0.9]],
        )
        .unwrap();
        let params = VariationalParams::new(vec![0.3, -0.8], vec![0.2, 0.5], vec![0.6, 0.35]).unwrap();
        (data, params)
    }

    #[test]
    fn mu_objective_on_zero_column_is_penalty() {
        let data = SurvivalDataset::new(vec![1.0, 2.0, 3.0], vec![true, true, false], Array2::zeros((3, 1))).unwrap();
        let params = VariationalParams::constant(1, 0.0, 0.3, 0.5).unwrap();
        let prior = PriorConfig::new(1.0, 1.0, 1.0).unwrap();
        let (problem, log_p) = setup(&data, &params, 0);
        let c = Coordinate::new(&problem, &log_p, &prior, 0);
        let base = c.objective_mu(0.0, 0.3) - oracle_folded(0.0, 0.3);
        for mu in [-1.0, -0.2, 0.5, 2.0] {
            let expected = base + oracle_folded(mu, 0.3);
            assert!((c.objective_mu(mu, 0.3) - expected).abs() < 1e-12);
            assert!(c.objective_mu(mu, 0.3) > c.objective_mu(0.0, 0.3));
        }
    }

    #[test]
    fn mu_objective_single_event() {
        let data = SurvivalDataset::new(vec![1.0], vec![true], array![[1.0]]).unwrap();
        let params = VariationalParams::constant(1, 0.0, 0.1, 0.5).unwrap();
        let prior = PriorConfig::new(1.0, 1.0, 1.0).unwrap();
        let (problem, log_p) = setup(&data, &params, 0);
        let c = Coordinate::new(&problem, &log_p, &prior, 0);
        // log M(1, μ, σ) − μ + λE|β|
        let direct = |mu: f64| mu + 0.5 * 0.01 - mu + oracle_folded(mu, 0.1);
        for mu in [-0.7, 0.4, 1.9] {
            let lhs = c.objective_mu(mu, 0.1) - c.objective_mu(0.0, 0.1);
            assert!((lhs - (direct(mu) - direct(0.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn objectives_match_oracle() {
        let (data, params) = three_obs();
        let prior = PriorConfig::new(1.3, 1.0, 4.0).unwrap();
        for j in 0..2 {
            let (problem, log_p) = setup(&data, &params, j);
            let c = Coordinate::new(&problem, &log_p, &prior, j);
            let sx: f64 = (0..3).filter(|&i| data.status()[i]).map(|i| data.design()[[i, j]]).sum();
            for (mu, sigma) in [(0.2, 0.4), (-1.5, 0.05), (0.9, 1.7)] {
                let d = oracle_risk_term(&data, &params, j, mu, sigma);
                let f = d - mu * sx + prior.lambda * oracle_folded(mu, sigma);
                let g = d + prior.lambda * oracle_folded(mu, sigma) - sigma.ln();
                assert!((c.objective_mu(mu, sigma) - f).abs() < 1e-12);
                assert!((c.objective_sigma(sigma, mu).unwrap() - g).abs() < 1e-12);

                // Spike state: the slab factor is M = 1.
                let d0 = oracle_risk_term(&data, &params, j, 0.0, 1e-300);
                let zeta = 0.5 + (1.0f64 / 4.0).ln()
                    - (prior.lambda * oracle_folded(mu, sigma)
                        + (2f64.sqrt() / (std::f64::consts::PI.sqrt() * sigma * prior.lambda)).ln()
                        + d - d0 - mu * sx);
                assert!((c.gamma_logit(mu, sigma) - zeta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigma_objective_diverges_at_zero() {
        let (data, params) = three_obs();
        let prior = PriorConfig::new(1.0, 1.0, 1.0).unwrap();
        let (problem, log_p) = setup(&data, &params, 0);
        let c = Coordinate::new(&problem, &log_p, &prior, 0);
        assert!(c.objective_sigma(0.0, 0.1).is_err());
        assert!(c.objective_sigma(-1.0, 0.1).is_err());
        let small = c.objective_sigma(1e-200, 0.1).unwrap();
        assert!(small > c.objective_sigma(1e-3, 0.1).unwrap() + 400.0);
    }

    #[test]
    fn sigma_minimizer_on_zero_column_matches_grid() {
        let data = SurvivalDataset::new(vec![1.0, 2.0], vec![true, true], Array2::zeros((2, 1))).unwrap();
        let params = VariationalParams::constant(1, 0.0, 0.3, 0.5).unwrap();
        let prior = PriorConfig::new(1.0, 1.0, 1.0).unwrap();
        let (problem, log_p) = setup(&data, &params, 0);
        let c = Coordinate::new(&problem, &log_p, &prior, 0);
        // Grid oracle over [1e-3, 5].
        let grid = 10_000;
        let (best, _) = (0..grid)
            .map(|k| 1e-3 + (5.0 - 1e-3) * k as f64 / (grid - 1) as f64)
            .map(|s| (s, c.objective_sigma(s, 0.0).unwrap()))
            .fold((0.0, f64::INFINITY), |acc, (s, v)| if v < acc.1 { (s, v) } else { acc });
        let found = super::super::brent::brent_minimize(
            |s: f64| c.objective_sigma(s, 0.0).unwrap(),
            1e-3,
            5.0,
            1e-8,
        )
        .unwrap();
        assert!((found.x - best).abs() < 1e-3, "{} vs {best}", found.x);
        // At μ = 0 the penalty is λσ√(2/π), so the stationary point is 1/(λ√(2/π)).
        assert!((found.x - 1.0 / SQRT_2_OVER_PI).abs() < 1e-6);
    }

    #[test]
    fn zero_column_gamma_logit() {
        let data = SurvivalDataset::new(vec![1.0, 2.0], vec![true, false], Array2::zeros((2, 1))).unwrap();
        let lambda = 1.0;
        let sigma = (std::f64::consts::PI / 2.0).sqrt() / lambda;
        let params = VariationalParams::constant(1, 0.0, sigma, 0.5).unwrap();
        let prior = PriorConfig::new(lambda, 3.0, 3.0).unwrap();
        let (problem, log_p) = setup(&data, &params, 0);
        let c = Coordinate::new(&problem, &log_p, &prior, 0);
        let expected = 0.5 - 1.0 - (2f64.sqrt() / (std::f64::consts::PI.sqrt() * sigma * lambda)).ln();
        assert!((c.gamma_logit(0.0, sigma) - expected).abs() < 1e-14);

        let generous = PriorConfig::new(lambda, 1e300, 1.0).unwrap();
        let c = Coordinate::new(&problem, &log_p, &generous, 0);
        assert!(crate::numeric::sigmoid(c.gamma_logit(0.0, sigma)) > 1.0 - 1e-12);
    }

    #[test]
    fn mu_objective_invariant_to_within_risk_set_permutation() {
        let data = SurvivalDataset::new(
            vec![1.0, 3.0, 3.0, 3.0],
            vec![true, true, false, true],
            array![[0.1], [0.5], [-1.2], [2.0]],
        )
        .unwrap();
        let perm = data.subset(&[0, 3, 1, 2]).unwrap();
        let params = VariationalParams::constant(1, 0.0, 0.2, 0.5).unwrap();
        let prior = PriorConfig::new(1.0, 1.0, 1.0).unwrap();
        let (pa, la) = setup(&data, &params, 0);
        let (pb, lb) = setup(&perm, &params, 0);
        let a = Coordinate::new(&pa, &la, &prior, 0);
        let b = Coordinate::new(&pb, &lb, &prior, 0);
        for mu in [-0.5, 0.3, 1.1] {
            assert!((a.objective_mu(mu, 0.2) - b.objective_mu(mu, 0.2)).abs() < 1e-12);
        }
    }
}
