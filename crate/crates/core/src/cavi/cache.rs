use crate::error::Result;
use crate::model::{log_mixture_factor, log_slab_moment, VariationalParams};
use crate::survival::{RiskIndex, SurvivalDataset};

/// A dataset rearranged for coordinate ascent: covariate columns stored
/// contiguously in descending-time order, truncated to the positions that
/// some risk set can reach.
#[derive(Debug, Clone)]
pub struct FitProblem {
    index: RiskIndex,
    columns: Vec<Vec<f64>>,
    event_x_sum: Vec<f64>,
}

impl FitProblem {
    pub fn new(data: &SurvivalDataset) -> Result<Self> {
        let index = RiskIndex::new(data)?;
        Ok(Self::with_index(data, index))
    }

    pub fn with_index(data: &SurvivalDataset, index: RiskIndex) -> Self {
        let active = index.active_len();
        let x = data.design();
        let columns = (0..data.p())
            .map(|j| index.order()[..active].iter().map(|&i| x[[i, j]]).collect())
            .collect();
        let event_x_sum = (0..data.p())
            .map(|j| index.events().iter().map(|e| x[[e.obs, j]]).sum())
            .collect();
        Self {
            index,
            columns,
            event_x_sum,
        }
    }

    pub fn index(&self) -> &RiskIndex {
        &self.index
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    /// Number of positions carried in each column.
    pub fn len(&self) -> usize {
        self.index.active_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column `j` in descending-time order.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// `Σ_{i:δ_i=1} x_ij`.
    pub fn event_x_sum(&self, j: usize) -> f64 {
        self.event_x_sum[j]
    }

    /// `Σ_events log Σ_{r∈R(t_i)} exp(value_at(r))` over sorted positions.
    #[inline]
    pub fn risk_lse(&self, value_at: impl FnMut(usize) -> f64) -> f64 {
        self.index.sum_event_lse_by(value_at)
    }
}

/// Per-observation `log Π_k (γ_k M(x_rk, μ_k, σ_k) + 1 − γ_k)`, i.e. the log
/// of `E_Q[exp(βᵀx_r)]`, kept in sync with the parameters one coordinate at
/// a time.
#[derive(Debug, Clone)]
pub struct SlabWeightCache {
    log_w: Vec<f64>,
    excluded: Vec<f64>,
    excluded_coord: Option<usize>,
    updates: usize,
    drift_budget: usize,
}

impl SlabWeightCache {
    /// Full build. `drift_budget` is the number of incremental coordinate
    /// updates tolerated before [`needs_rebuild`](Self::needs_rebuild) fires.
    pub fn new(problem: &FitProblem, params: &VariationalParams, drift_budget: usize) -> Self {
        let mut cache = Self {
            log_w: vec![0.0; problem.len()],
            excluded: vec![0.0; problem.len()],
            excluded_coord: None,
            updates: 0,
            drift_budget: drift_budget.max(1),
        };
        cache.rebuild(problem, params);
        cache
    }

    pub fn rebuild(&mut self, problem: &FitProblem, params: &VariationalParams) {
        self.log_w.iter_mut().for_each(|w| *w = 0.0);
        for j in 0..problem.p() {
            let (mu, sigma, gamma) = (params.mu[j], params.sigma[j], params.gamma[j]);
            if gamma <= 0.0 {
                continue;
            }
            for (w, &x) in self.log_w.iter_mut().zip(problem.column(j)) {
                *w += log_mixture_factor(gamma, log_slab_moment(x, mu, sigma));
            }
        }
        self.updates = 0;
        self.excluded_coord = None;
    }

    pub fn needs_rebuild(&self) -> bool {
        self.updates >= self.drift_budget
    }

    /// Log weights including every coordinate.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    /// Compute `log P_j(x_r)` (all coordinates except `j`) from the current
    /// parameters of coordinate `j`.
    pub fn exclude(&mut self, problem: &FitProblem, params: &VariationalParams, j: usize) -> &[f64] {
        let (mu, sigma, gamma) = (params.mu[j], params.sigma[j], params.gamma[j]);
        for ((e, &w), &x) in self.excluded.iter_mut().zip(&self.log_w).zip(problem.column(j)) {
            *e = w - log_mixture_factor(gamma, log_slab_moment(x, mu, sigma));
        }
        self.excluded_coord = Some(j);
        &self.excluded
    }

    /// `log P_j` from the last [`exclude`](Self::exclude) call.
    pub fn excluded(&self) -> &[f64] {
        &self.excluded
    }

    /// Fold the (possibly updated) parameters of coordinate `j` back in.
    /// Must follow `exclude(.., j)`.
    pub fn include(&mut self, problem: &FitProblem, params: &VariationalParams, j: usize) {
        assert_eq!(self.excluded_coord, Some(j), "include must follow exclude of the same coordinate");
        let (mu, sigma, gamma) = (params.mu[j], params.sigma[j], params.gamma[j]);
        for ((w, &e), &x) in self.log_w.iter_mut().zip(&self.excluded).zip(problem.column(j)) {
            *w = e + log_mixture_factor(gamma, log_slab_moment(x, mu, sigma));
        }
        self.excluded_coord = None;
        self.updates += 1;
    }
}
