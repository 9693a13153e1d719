//! Starting values for the slab means.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::survival::{RiskIndex, SurvivalDataset};

/// How the slab means `μ` are initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// ℓ1-penalized partial-likelihood fit by proximal gradient.
    Lasso,
    /// ℓ2-penalized partial-likelihood fit by Newton steps.
    Ridge,
    Zero,
    /// A user-supplied vector, used as is.
    File(Vec<f64>),
}

/// Cox partial log-likelihood with its gradient and Hessian, evaluated by
/// running sums in descending-time order.
pub struct CoxLikelihood<'a> {
    data: &'a SurvivalDataset,
    index: &'a RiskIndex,
}

impl<'a> CoxLikelihood<'a> {
    pub fn new(data: &'a SurvivalDataset, index: &'a RiskIndex) -> Self {
        Self { data, index }
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        let x = self.data.design();
        (0..self.data.n())
            .map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        self.index.log_likelihood_eta(&self.eta(beta))
    }

    /// `(l_p(β), ∇l_p(β))`.
    pub fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let (value, grad, _) = self.accumulate(beta, false);
        (value, grad)
    }

    /// `(l_p(β), ∇l_p(β), −∇²l_p(β))`.
    pub fn with_information(&self, beta: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let (value, grad, info) = self.accumulate(beta, true);
        (value, grad, info.expect("requested"))
    }

    fn accumulate(&self, beta: &[f64], hessian: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.data.p();
        let x = self.data.design();
        let eta = self.eta(beta);
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let order = self.index.order();

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = hessian.then(|| DMatrix::<f64>::zeros(p, p));
        let mut grad = vec![0.0; p];
        let mut info = hessian.then(|| DMatrix::<f64>::zeros(p, p));
        let mut value = 0.0;
        let mut pos = 0;
        let events = self.index.events();
        let mut k = 0;
        while k < events.len() {
            let end = events[k].risk_len;
            while pos < end {
                let i = order[pos];
                let w = (eta[i] - shift).exp();
                s0 += w;
                let row = x.row(i);
                for j in 0..p {
                    s1[j] += w * row[j];
                }
                if let Some(s2) = s2.as_mut() {
                    for a in 0..p {
                        let wa = w * row[a];
                        if wa == 0.0 {
                            continue;
                        }
                        for b in a..p {
                            s2[(a, b)] += wa * row[b];
                        }
                    }
                }
                pos += 1;
            }
            let mut count = 0.0;
            while k < events.len() && events[k].risk_len == end {
                let i = events[k].obs;
                value += eta[i];
                for j in 0..p {
                    grad[j] += x[[i, j]];
                }
                count += 1.0;
                k += 1;
            }
            value -= count * (s0.ln() + shift);
            for j in 0..p {
                grad[j] -= count * s1[j] / s0;
            }
            if let (Some(info), Some(s2)) = (info.as_mut(), s2.as_ref()) {
                for a in 0..p {
                    let ma = s1[a] / s0;
                    for b in a..p {
                        info[(a, b)] += count * (s2[(a, b)] / s0 - ma * s1[b] / s0);
                    }
                }
            }
        }
        if let Some(info) = info.as_mut() {
            for a in 0..p {
                for b in 0..a {
                    info[(a, b)] = info[(b, a)];
                }
            }
        }
        (value, grad, info)
    }

    /// `max_j |∂_j l_p(0)|`: the smallest ℓ1 penalty whose solution is 0.
    pub fn lambda_max(&self) -> f64 {
        let (_, g) = self.value_and_gradient(&vec![0.0; self.data.p()]);
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimize `−l_p(β) + penalty·‖β‖₁` by ISTA with backtracking.
pub fn lasso(lik: &CoxLikelihood<'_>, penalty: f64, max_iter: usize) -> Vec<f64> {
    let p = lik.data.p();
    let mut beta = vec![0.0; p];
    let (mut value, mut grad) = lik.value_and_gradient(&beta);
    let mut step = 1.0;
    for _ in 0..max_iter {
        let mut candidate;
        let mut cand_value;
        loop {
            candidate = beta
                .iter()
                .zip(&grad)
                .map(|(b, g)| soft_threshold(b + step * g, step * penalty))
                .collect::<Vec<_>>();
            cand_value = lik.value(&candidate);
            // Majorization check on the smooth part −l_p.
            let (mut lin, mut sq) = (0.0, 0.0);
            for j in 0..p {
                let d = candidate[j] - beta[j];
                lin += grad[j] * d;
                sq += d * d;
            }
            if cand_value.is_finite() && -cand_value <= -value - lin + sq / (2.0 * step) + 1e-12 {
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return beta;
            }
        }
        let change = candidate
            .iter()
            .zip(&beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = candidate;
        let next = lik.value_and_gradient(&beta);
        value = next.0;
        grad = next.1;
        step *= 1.25;
        if change < 1e-8 {
            break;
        }
    }
    debug_assert!(value.is_finite());
    beta
}

/// Minimize `−l_p(β) + penalty/2·‖β‖²` by damped Newton.
pub fn ridge(lik: &CoxLikelihood<'_>, penalty: f64, max_iter: usize) -> Result<Vec<f64>> {
    let p = lik.data.p();
    let mut beta = DVector::<f64>::zeros(p);
    let objective = |b: &[f64], v: f64| -v + 0.5 * penalty * b.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..max_iter {
        let (value, grad, info) = lik.with_information(beta.as_slice());
        let current = objective(beta.as_slice(), value);
        let g = DVector::from_vec(grad) - &beta * penalty;
        let h = info + DMatrix::<f64>::identity(p, p) * penalty;
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("ridge system is not positive definite".into()))?;
        let dir = chol.solve(&g);
        let mut t = 1.0;
        loop {
            let cand = &beta + &dir * t;
            let v = lik.value(cand.as_slice());
            if v.is_finite() && objective(cand.as_slice(), v) <= current + 1e-12 {
                beta = cand;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Ok(beta.as_slice().to_vec());
            }
        }
        if (&dir * t).amax() < 1e-8 {
            break;
        }
    }
    Ok(beta.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_data(n: usize, p: usize, seed: u64) -> SurvivalDataset {
        let mut r = rng::stream(seed, &[0]);
        let x = Array2::from_shape_fn((n, p), |_| r.sample::<f64, _>(StandardNormal));
        let times = (0..n).map(|i| -(r.random::<f64>() + 1e-9).ln() * (-x[[i, 0]]).exp()).collect();
        let status = (0..n).map(|i| i == 0 || r.random::<f64>() < 0.8).collect();
        SurvivalDataset::new(times, status, x).unwrap()
    }

    #[test]
    fn gradient_and_information_match_finite_differences() {
        let data = random_data(25, 3, 2);
        let index = RiskIndex::new(&data).unwrap();
        let lik = CoxLikelihood::new(&data, &index);
        let beta = [0.3, -0.2, 0.7];
        let (v, g, info) = lik.with_information(&beta);
        assert!((v - crate::survival::partial_log_likelihood(&data, &index, &beta).unwrap()).abs() < 1e-10);
        let h = 1e-5;
        for j in 0..3 {
            let mut up = beta;
            let mut dn = beta;
            up[j] += h;
            dn[j] -= h;
            let fd = (lik.value(&up) - lik.value(&dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6, "{fd} vs {}", g[j]);
            let gu = lik.value_and_gradient(&up).1;
            let gd = lik.value_and_gradient(&dn).1;
            for k in 0..3 {
                let fd2 = -(gu[k] - gd[k]) / (2.0 * h);
                assert!((fd2 - info[(j, k)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn lasso_at_lambda_max_is_zero() {
        let data = random_data(40, 5, 3);
        let index = RiskIndex::new(&data).unwrap();
        let lik = CoxLikelihood::new(&data, &index);
        let lmax = lik.lambda_max();
        assert!(lasso(&lik, lmax, 500).iter().all(|&b| b == 0.0));
        assert!(lasso(&lik, lmax * 1.5, 500).iter().all(|&b| b == 0.0));
        assert!(lasso(&lik, lmax * 0.5, 500).iter().any(|&b| b != 0.0));
    }

    #[test]
    fn lasso_satisfies_kkt() {
        let data = random_data(60, 4, 4);
        let index = RiskIndex::new(&data).unwrap();
        let lik = CoxLikelihood::new(&data, &index);
        let pen = 0.2 * lik.lambda_max();
        let beta = lasso(&lik, pen, 5000);
        let (_, g) = lik.value_and_gradient(&beta);
        for j in 0..4 {
            if beta[j] == 0.0 {
                assert!(g[j].abs() <= pen + 1e-5);
            } else {
                assert!((g[j] - pen * beta[j].signum()).abs() < 1e-4, "{} {}", g[j], beta[j]);
            }
        }
    }

    #[test]
    fn ridge_stationary() {
        let data = random_data(50, 3, 5);
        let index = RiskIndex::new(&data).unwrap();
        let lik = CoxLikelihood::new(&data, &index);
        let beta = ridge(&lik, 0.5, 50).unwrap();
        let (_, g) = lik.value_and_gradient(&beta);
        for j in 0..3 {
            assert!((g[j] - 0.5 * beta[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn ties_handled_breslow() {
        let data = SurvivalDataset::new(
            vec![1.0, 1.0, 2.0],
            vec![true, true, false],
            array![[1.0], [0.0], [2.0]],
        )
        .unwrap();
        let index = RiskIndex::new(&data).unwrap();
        let lik = CoxLikelihood::new(&data, &index);
        let b = [0.4];
        let direct = 0.4 - 2.0 * (0.4f64.exp() + 1.0 + 0.8f64.exp()).ln();
        assert!((lik.value(&b) - direct).abs() < 1e-12);
        let (_, g) = lik.value_and_gradient(&b);
        let w = [0.4f64.exp(), 1.0, 0.8f64.exp()];
        let mean = (w[0] + 2.0 * w[2]) / (w[0] + w[1] + w[2]);
        assert!((g[0] - (1.0 - 2.0 * mean)).abs() < 1e-12);
    }
}
