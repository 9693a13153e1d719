//! Posterior summaries: marginal credible sets, Bayesian-FDR selection, and
//! pairwise risk probabilities.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{posterior_mean, sample_into, VariationalParams};
use crate::numeric::normal_quantile;
use crate::rng::{self, label};
use crate::survival::{prognostic_index, SurvivalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Interval,
    ZeroAtom,
    IntervalPlusZero,
}

/// A marginal credible set: an interval, the atom `{0}`, or their union.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleSet {
    pub kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub level: f64,
}

impl CredibleSet {
    pub fn zero(level: f64) -> Self {
        Self {
            kind: SetKind::ZeroAtom,
            lower: None,
            upper: None,
            level,
        }
    }

    fn with_interval(kind: SetKind, lower: f64, upper: f64, level: f64) -> Self {
        debug_assert!(lower <= upper);
        Self {
            kind,
            lower: Some(lower),
            upper: Some(upper),
            level,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        let in_interval = match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => lo <= value && value <= hi,
            _ => false,
        };
        match self.kind {
            SetKind::Interval => in_interval,
            SetKind::ZeroAtom => value == 0.0,
            SetKind::IntervalPlusZero => in_interval || value == 0.0,
        }
    }

    /// Lebesgue measure; the atom contributes nothing.
    pub fn size(&self) -> f64 {
        match (self.kind, self.lower, self.upper) {
            (SetKind::ZeroAtom, _, _) => 0.0,
            (_, Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }
}

fn check_level(level: f64, threshold: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    if !(threshold > 0.5 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must lie in (0.5, 1), got {threshold}")));
    }
    Ok(())
}

fn classify(inclusion: f64, threshold: f64, interval: Option<(f64, f64)>, level: f64) -> CredibleSet {
    match interval {
        Some((lo, hi)) if inclusion > threshold => CredibleSet::with_interval(SetKind::Interval, lo, hi, level),
        Some((lo, hi)) if inclusion >= 1.0 - threshold => {
            CredibleSet::with_interval(SetKind::IntervalPlusZero, lo, hi, level)
        }
        _ => CredibleSet::zero(level),
    }
}

/// Per-coordinate sets from the variational posterior. The interval part is
/// the central `level` interval of the slab `N(μ_j, σ_j²)`; inclusion above
/// `threshold` keeps only the interval, below `1 − threshold` only `{0}`.
pub fn credible_sets(params: &VariationalParams, level: f64, threshold: f64) -> Result<Vec<CredibleSet>> {
    check_level(level, threshold)?;
    let z = normal_quantile(0.5 + 0.5 * level);
    Ok((0..params.p())
        .map(|j| {
            let (m, s) = (params.mu[j], params.sigma[j]);
            classify(params.gamma[j], threshold, Some((m - z * s, m + z * s)), level)
        })
        .collect())
}

/// Shortest interval holding at least a `level` fraction of `draws`.
pub fn shortest_interval(draws: &[f64], level: f64) -> Option<(f64, f64)> {
    if draws.is_empty() {
        return None;
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let k = ((level * m as f64).ceil() as usize).clamp(1, m);
    (0..=m - k)
        .map(|i| (sorted[i], sorted[i + k - 1]))
        .min_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
}

/// Sets from sampled draws: `inclusion[j]` picks the case and the interval
/// is the shortest one covering `level` of the nonzero draws of `β_j`.
pub fn credible_sets_from_draws(
    inclusion: &[f64],
    nonzero_draws: &[Vec<f64>],
    level: f64,
    threshold: f64,
) -> Result<Vec<CredibleSet>> {
    check_level(level, threshold)?;
    if inclusion.len() != nonzero_draws.len() {
        return Err(Error::Dimension {
            what: "draws".into(),
            expected: inclusion.len(),
            found: nonzero_draws.len(),
        });
    }
    Ok(inclusion
        .iter()
        .zip(nonzero_draws)
        .map(|(&g, d)| classify(g, threshold, shortest_interval(d, level), level))
        .collect())
}

/// Which admissible threshold to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// The smallest candidate with BFDR below `α`: the most discoveries.
    #[default]
    Smallest,
    /// The largest admissible candidate, which selects nothing whenever the
    /// empty selection counts as admissible.
    Largest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfdrSelection {
    pub k_star: f64,
    pub bfdr: f64,
    /// Indices with `γ_j > k_star`, ascending.
    pub selected: Vec<usize>,
}

/// Estimated Bayesian FDR of selecting `{j : γ_j > k}`; 0 for the empty set.
pub fn bfdr(gamma: &[f64], k: f64) -> f64 {
    let (mut false_mass, mut count) = (0.0, 0usize);
    for &g in gamma.iter().filter(|&&g| g > k) {
        false_mass += 1.0 - g;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        false_mass / count as f64
    }
}

/// Threshold `k*` on inclusion probabilities controlling BFDR below `alpha`,
/// searched over `{0} ∪ {γ_j}`.
pub fn bfdr_threshold(gamma: &[f64], alpha: f64, rule: ThresholdRule) -> Result<BfdrSelection> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut candidates: Vec<f64> = std::iter::once(0.0).chain(gamma.iter().copied()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let admissible = |k: &f64| bfdr(gamma, *k) < alpha;
    let k_star = match rule {
        ThresholdRule::Smallest => candidates.iter().copied().find(admissible),
        ThresholdRule::Largest => candidates.iter().rev().copied().find(admissible),
    }
    .expect("the largest candidate selects nothing and is always admissible");
    Ok(BfdrSelection {
        k_star,
        bfdr: bfdr(gamma, k_star),
        selected: (0..gamma.len()).filter(|&j| gamma[j] > k_star).collect(),
    })
}

/// Monte Carlo probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProbability {
    pub probability: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl RiskProbability {
    fn from_count(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            probability: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}

fn draw_block(params: &VariationalParams, samples: usize, seed: u64) -> Result<Array2<f64>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("number of Monte Carlo samples must be at least 1".into()));
    }
    let mut r = rng::stream(seed, &[label::RISK]);
    let mut block = Array2::zeros((samples, params.p()));
    let mut beta = vec![0.0; params.p()];
    for mut row in block.rows_mut() {
        sample_into(params, &mut r, &mut beta);
        row.iter_mut().zip(&beta).for_each(|(d, b)| *d = *b);
    }
    Ok(block)
}

fn dot(a: ndarray::ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Π(βᵀx_i ≥ βᵀx_j)` under `Q`, estimated from `samples` draws.
pub fn risk_comparison(params: &VariationalParams, x_i: &[f64], x_j: &[f64], samples: usize, seed: u64) -> Result<RiskProbability> {
    for x in [x_i, x_j] {
        if x.len() != params.p() {
            return Err(Error::Dimension {
                what: "covariate vector".into(),
                expected: params.p(),
                found: x.len(),
            });
        }
    }
    let block = draw_block(params, samples, seed)?;
    let hits = block.rows().into_iter().filter(|b| dot(b.view(), x_i) >= dot(b.view(), x_j)).count();
    Ok(RiskProbability::from_count(hits, samples))
}

/// Pairwise risk probabilities between two patient groups.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    /// Row patients (observation indices), ascending prognostic index.
    pub high: Vec<usize>,
    /// Column patients, ascending prognostic index.
    pub low: Vec<usize>,
    /// `values[[a, b]] = Π(βᵀx_high[a] ≥ βᵀx_low[b])`.
    pub values: Array2<f64>,
}

/// Every high-vs-low pair evaluated on one shared block of draws.
pub fn risk_matrix(
    params: &VariationalParams,
    data: &SurvivalDataset,
    low: &[usize],
    high: &[usize],
    samples: usize,
    seed: u64,
) -> Result<RiskMatrix> {
    if params.p() != data.p() {
        return Err(Error::Dimension {
            what: "variational parameters".into(),
            expected: data.p(),
            found: params.p(),
        });
    }
    if let Some(i) = low.iter().chain(high).find(|&&i| i >= data.n()) {
        return Err(Error::InvalidData(format!("patient index {i} out of range")));
    }
    let pi = prognostic_index(data, &posterior_mean(params))?;
    let by_risk = |group: &[usize]| {
        let mut g = group.to_vec();
        g.sort_by(|&a, &b| pi[a].total_cmp(&pi[b]).then(a.cmp(&b)));
        g
    };
    let (high, low) = (by_risk(high), by_risk(low));
    let block = draw_block(params, samples, seed)?;
    let x = data.design();
    // η for every draw and patient: one column per patient.
    let eta = |group: &[usize]| -> Vec<Vec<f64>> {
        group
            .iter()
            .map(|&i| {
                let xi = x.row(i).to_vec();
                block.rows().into_iter().map(|b| dot(b, &xi)).collect()
            })
            .collect()
    };
    let (eta_high, eta_low) = (eta(&high), eta(&low));
    let rows: Vec<Vec<f64>> = eta_high
        .par_iter()
        .map(|h| {
            eta_low
                .iter()
                .map(|l| h.iter().zip(l).filter(|(a, b)| a >= b).count() as f64 / samples as f64)
                .collect()
        })
        .collect();
    let values = Array2::from_shape_fn((high.len(), low.len()), |(a, b)| rows[a][b]);
    Ok(RiskMatrix { high, low, values })
}

/// Split patients at the median of a reference (training) prognostic index:
/// `(below, at_or_above)`.
pub fn median_split(reference: &[f64], eta: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if reference.is_empty() {
        return Err(Error::InvalidData("empty reference prognostic index".into()));
    }
    let mut sorted = reference.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok((0..eta.len()).partition(|&i| eta[i] < median))
}
