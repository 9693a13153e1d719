//! Right-censored survival data and the Cox partial likelihood.
//!
//! Risk sets `R(t_i) = {r : t_r >= t_i}` are prefixes of the observations
//! sorted by descending time, so every sum over a risk set is a running
//! accumulation along that order. Tied times share one risk set (Breslow):
//! each tied event contributes its own full term over the whole tie group.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::numeric::RunningLse;

/// Observed times, censoring flags and covariates for `n` subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    status: Vec<bool>,
    design: Array2<f64>,
    feature_names: Option<Vec<String>>,
}

impl SurvivalDataset {
    /// Validates lengths, positivity of times and finiteness of covariates.
    pub fn new(times: Vec<f64>, status: Vec<bool>, design: Array2<f64>) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no observations".into()));
        }
        if design.ncols() == 0 {
            return Err(Error::InvalidData("design matrix has no columns".into()));
        }
        if status.len() != n {
            return Err(Error::Dimension {
                what: "status".into(),
                expected: n,
                found: status.len(),
            });
        }
        if design.nrows() != n {
            return Err(Error::Dimension {
                what: "design rows".into(),
                expected: n,
                found: design.nrows(),
            });
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidData(format!(
                "time at observation {} is not a positive finite number: {}",
                i, times[i]
            )));
        }
        if let Some(((i, j), v)) = design.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite covariate at observation {i}, feature {j}: {v}"
            )));
        }
        Ok(Self {
            times,
            status,
            design,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::Dimension {
                what: "feature names".into(),
                expected: self.p(),
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Name of feature `j`, falling back to `x{j+1}`.
    pub fn feature_name(&self, j: usize) -> String {
        match &self.feature_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let design = self.design.select(Axis(0), indices);
        let times = indices.iter().map(|&i| self.times[i]).collect();
        let status = indices.iter().map(|&i| self.status[i]).collect();
        let mut out = Self::new(times, status, design)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Subtract column means from every covariate.
    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        if let Some(means) = self.design.mean_axis(Axis(0)) {
            out.design -= &means;
        }
        out
    }

    /// Mean of each covariate column.
    pub fn column_means(&self) -> Array1<f64> {
        self.design
            .mean_axis(Axis(0))
            .expect("dataset has at least one row")
    }

    /// Keep only features whose coefficient of variation is at least the
    /// median coefficient of variation across features. Returns the
    /// filtered dataset and the retained column indices.
    pub fn filter_low_variation(&self) -> Result<(Self, Vec<usize>)> {
        let n = self.n() as f64;
        let cv: Vec<f64> = self
            .design
            .axis_iter(Axis(1))
            .map(|col| {
                let mean = col.sum() / n;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                let sd = var.sqrt();
                if mean == 0.0 {
                    if sd == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (sd / mean).abs()
                }
            })
            .collect();
        let mut sorted = cv.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        let keep: Vec<usize> = (0..m).filter(|&j| cv[j] >= median).collect();
        let design = self.design.select(Axis(1), &keep);
        let mut out = Self::new(self.times.clone(), self.status.clone(), design)?;
        if let Some(names) = &self.feature_names {
            out.feature_names = Some(keep.iter().map(|&j| names[j].clone()).collect());
        }
        Ok((out, keep))
    }
}

/// One event's slot in the descending-time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventSlot {
    /// Observation index in the dataset.
    pub obs: usize,
    /// Position in the descending-time order.
    pub position: usize,
    /// `|R(t_obs)|`: the risk set is `order[..risk_len]`.
    pub risk_len: usize,
}

/// Descending-time ordering with risk-set bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskIndex {
    order: Vec<usize>,
    inverse: Vec<usize>,
    tie_groups: Vec<Range<usize>>,
    events: Vec<EventSlot>,
    /// (prefix end, number of events in the tie group ending there)
    event_groups: Vec<(usize, usize)>,
}

impl RiskIndex {
    /// Sort observations by descending time (ties in input order).
    pub fn new(data: &SurvivalDataset) -> Result<Self> {
        if data.n_events() == 0 {
            return Err(Error::NoEvents);
        }
        let times = data.times();
        let n = times.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
        let mut inverse = vec![0; n];
        for (pos, &obs) in order.iter().enumerate() {
            inverse[obs] = pos;
        }

        let mut tie_groups = Vec::new();
        let mut start = 0;
        for pos in 1..=n {
            if pos == n || times[order[pos]] != times[order[start]] {
                tie_groups.push(start..pos);
                start = pos;
            }
        }

        let mut events = Vec::with_capacity(data.n_events());
        let mut event_groups = Vec::new();
        for group in &tie_groups {
            let mut count = 0;
            for pos in group.clone() {
                let obs = order[pos];
                if data.status()[obs] {
                    events.push(EventSlot {
                        obs,
                        position: pos,
                        risk_len: group.end,
                    });
                    count += 1;
                }
            }
            if count > 0 {
                event_groups.push((group.end, count));
            }
        }

        Ok(Self {
            order,
            inverse,
            tie_groups,
            events,
            event_groups,
        })
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// Observation indices sorted by descending time.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of each observation in [`order`](Self::order).
    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Ranges of positions sharing a time.
    pub fn tie_groups(&self) -> &[Range<usize>] {
        &self.tie_groups
    }

    /// Events, ascending in position.
    pub fn events(&self) -> &[EventSlot] {
        &self.events
    }

    /// Observations in `R(t_obs)`.
    pub fn risk_set(&self, obs: usize) -> &[usize] {
        let pos = self.inverse[obs];
        let group = self
            .tie_groups
            .iter()
            .find(|g| g.contains(&pos))
            .expect("every position lies in a tie group");
        &self.order[..group.end]
    }

    /// Number of leading positions any risk set can reach.
    pub fn active_len(&self) -> usize {
        self.event_groups.last().map_or(0, |g| g.0)
    }

    /// Rearrange observation-indexed values into descending-time order.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| values[i]).collect()
    }

    /// `Σ_{events i} log Σ_{r∈R(t_i)} exp(v_r)` for `v` already in
    /// descending-time order.
    pub fn sum_event_lse_sorted(&self, sorted: &[f64]) -> f64 {
        self.sum_event_lse_by(|pos| sorted[pos])
    }

    /// Same as [`sum_event_lse_sorted`](Self::sum_event_lse_sorted) with the
    /// value at each position supplied by a closure.
    #[inline]
    pub fn sum_event_lse_by(&self, mut value_at: impl FnMut(usize) -> f64) -> f64 {
        let mut acc = RunningLse::new();
        let mut total = 0.0;
        let mut pos = 0;
        for &(end, count) in &self.event_groups {
            while pos < end {
                acc.push(value_at(pos));
                pos += 1;
            }
            total += count as f64 * acc.value();
        }
        total
    }

    /// Partial log-likelihood given the linear predictor of every
    /// observation (observation order).
    pub fn log_likelihood_eta(&self, eta: &[f64]) -> f64 {
        let numerator: f64 = self.events.iter().map(|e| eta[e.obs]).sum();
        numerator - self.sum_event_lse_by(|pos| eta[self.order[pos]])
    }
}

fn check_beta(data: &SurvivalDataset, beta: &[f64]) -> Result<()> {
    if beta.len() != data.p() {
        return Err(Error::Dimension {
            what: "coefficient vector".into(),
            expected: data.p(),
            found: beta.len(),
        });
    }
    if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
        return Err(Error::NonFinite {
            what: "coefficient vector".into(),
            at: *b,
        });
    }
    Ok(())
}

/// Linear predictor `η_i = βᵀx_i` for every observation.
pub fn prognostic_index(data: &SurvivalDataset, beta: &[f64]) -> Result<Vec<f64>> {
    check_beta(data, beta)?;
    Ok(data.design().dot(&ArrayView1::from(beta)).to_vec())
}

/// Cox partial log-likelihood
/// `Σ_{i:δ_i=1} [βᵀx_i − log Σ_{r∈R(t_i)} exp(βᵀx_r)]`.
pub fn partial_log_likelihood(data: &SurvivalDataset, index: &RiskIndex, beta: &[f64]) -> Result<f64> {
    let eta = prognostic_index(data, beta)?;
    Ok(index.log_likelihood_eta(&eta))
}

/// Harrell's concordance estimator with strict inequalities. `None` when
/// no pair is comparable.
pub fn c_index(data: &SurvivalDataset, eta: &[f64]) -> Result<Option<f64>> {
    c_index_with_ties(data, eta, false)
}

/// Concordance estimator; with `tie_credit` a pair with equal predictors
/// counts one half instead of zero.
pub fn c_index_with_ties(data: &SurvivalDataset, eta: &[f64], tie_credit: bool) -> Result<Option<f64>> {
    let n = data.n();
    if eta.len() != n {
        return Err(Error::Dimension {
            what: "prognostic index".into(),
            expected: n,
            found: eta.len(),
        });
    }
    let t = data.times();
    let d = data.status();
    let tie = if tie_credit { 0.5 } else { 0.0 };
    let mut concordant = 0.0;
    let mut comparable = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            // Earlier time with an event is the one expected to have higher risk.
            let (early, late) = if t[i] < t[j] {
                (i, j)
            } else if t[j] < t[i] {
                (j, i)
            } else {
                continue;
            };
            if !d[early] {
                continue;
            }
            comparable += 1;
            if eta[early] > eta[late] {
                concordant += 1.0;
            } else if eta[early] == eta[late] {
                concordant += tie;
            }
        }
    }
    Ok((comparable > 0).then(|| concordant / comparable as f64))
}
