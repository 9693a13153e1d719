//! Estimation, selection and uncertainty metrics against a known truth.

use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::error::{Error, Result};
use crate::summaries::CredibleSet;

/// Inclusion probability at or above which a coefficient counts as selected.
pub const SELECTION_CUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub l2_error: f64,
    pub l1_error: f64,
    /// `None` when the truth has no nonzero coefficient.
    pub tpr: Option<f64>,
    pub fdr: f64,
    /// `None` unless the truth has both zero and nonzero coefficients.
    pub auc: Option<f64>,
    pub coverage_nonzero: Option<f64>,
    pub coverage_zero: Option<f64>,
    pub mean_size_nonzero: Option<f64>,
    pub mean_size_zero: Option<f64>,
}

/// Mann-Whitney estimate of `P(score_pos > score_neg)`, ties counting ½.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let midrank = 0.5 * (start + 1 + end) as f64;
        rank_sum += midrank * idx[start..end].iter().filter(|&&i| positive[i]).count() as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn evaluate(beta_hat: &[f64], inclusion: &[f64], sets: &[CredibleSet], truth: &GroundTruth) -> Result<MetricsReport> {
    let p = truth.beta0.len();
    for (what, len) in [("beta_hat", beta_hat.len()), ("inclusion", inclusion.len()), ("credible sets", sets.len())] {
        if len != p {
            return Err(Error::Dimension {
                what: what.into(),
                expected: p,
                found: len,
            });
        }
    }
    let b0 = &truth.beta0;
    let l2_error = b0.iter().zip(beta_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let l1_error = b0.iter().zip(beta_hat).map(|(a, b)| (a - b).abs()).sum();
    let positive: Vec<bool> = b0.iter().map(|&b| b != 0.0).collect();
    let selected: Vec<bool> = inclusion.iter().map(|&g| g >= SELECTION_CUT).collect();
    let s = positive.iter().filter(|&&x| x).count();
    let n_sel = selected.iter().filter(|&&x| x).count();
    let tp = (0..p).filter(|&j| positive[j] && selected[j]).count();
    let fp = n_sel - tp;
    let of = |want: bool, f: &dyn Fn(usize) -> f64| mean((0..p).filter(|&j| positive[j] == want).map(f));
    let covered = |j: usize| f64::from(u8::from(sets[j].contains(b0[j])));
    let size = |j: usize| sets[j].size();
    Ok(MetricsReport {
        l2_error,
        l1_error,
        tpr: (s > 0).then(|| tp as f64 / s as f64),
        fdr: fp as f64 / n_sel.max(1) as f64,
        auc: auc(inclusion, &positive),
        coverage_nonzero: of(true, &covered),
        coverage_zero: of(false, &covered),
        mean_size_nonzero: of(true, &size),
        mean_size_zero: of(false, &size),
    })
}
