//! Pooled multinomial logit: one weight row and intercept per class over the
//! shared feature vector, fitted by full-batch gradient descent on the
//! L2-penalised mean cross-entropy.

use serde::{Deserialize, Serialize};

use super::{softmax, BenchmarkError, FeatureVector, N_CLASSES, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MnlConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once an accepted step lowers the objective by less than this.
    pub tolerance: f64,
    /// Inverse of the usual `C`: the penalty is `l2 / (2 n) * ||W||^2`.
    pub l2: f64,
}

impl Default for MnlConfig {
    fn default() -> Self {
        MnlConfig {
            seed: 42,
            learning_rate: 1.0,
            max_epochs: 5000,
            tolerance: 1e-9,
            l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlParams {
    pub weights: [[f64; N_FEATURES]; N_CLASSES],
    pub intercepts: [f64; N_CLASSES],
}

pub const N_PARAMS: usize = N_CLASSES * (N_FEATURES + 1);

impl MnlParams {
    pub fn zeros() -> Self {
        MnlParams {
            weights: [[0.0; N_FEATURES]; N_CLASSES],
            intercepts: [0.0; N_CLASSES],
        }
    }

    /// Weights row by row, then intercepts.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.weights.iter().flatten().copied().collect();
        v.extend(self.intercepts);
        v
    }

    pub fn from_flat(v: &[f64]) -> Self {
        assert_eq!(v.len(), N_PARAMS);
        let mut p = MnlParams::zeros();
        for k in 0..N_CLASSES {
            p.weights[k].copy_from_slice(&v[k * N_FEATURES..(k + 1) * N_FEATURES]);
        }
        p.intercepts.copy_from_slice(&v[N_CLASSES * N_FEATURES..]);
        p
    }

    pub fn logits(&self, x: &FeatureVector) -> [f64; N_CLASSES] {
        let mut z = self.intercepts;
        for (k, zk) in z.iter_mut().enumerate() {
            *zk += self.weights[k].iter().zip(x.0).map(|(w, xi)| w * xi).sum::<f64>();
        }
        z
    }

    pub fn probabilities(&self, x: &FeatureVector) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

/// Penalised mean cross-entropy and its gradient (same layout as
/// [`MnlParams::to_flat`]).
pub fn loss_and_gradient(params: &MnlParams, xs: &[FeatureVector], ys: &[usize], l2: f64) -> (f64, MnlParams) {
    let n = xs.len() as f64;
    let mut grad = MnlParams::zeros();
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = params.logits(x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += log_sum - z[y];
        for (k, zk) in z.iter().enumerate() {
            let residual = (zk - log_sum).exp() - if k == y { 1.0 } else { 0.0 };
            grad.intercepts[k] += residual / n;
            for j in 0..N_FEATURES {
                grad.weights[k][j] += residual * x.0[j] / n;
            }
        }
    }
    loss /= n;
    let penalty_scale = l2 / n;
    let mut sq = 0.0;
    for k in 0..N_CLASSES {
        for j in 0..N_FEATURES {
            let w = params.weights[k][j];
            sq += w * w;
            grad.weights[k][j] += penalty_scale * w;
        }
    }
    (loss + 0.5 * penalty_scale * sq, grad)
}

fn step(params: &MnlParams, grad: &MnlParams, lr: f64) -> MnlParams {
    let p = params.to_flat();
    let g = grad.to_flat();
    MnlParams::from_flat(&p.iter().zip(&g).map(|(a, b)| a - lr * b).collect::<Vec<_>>())
}

/// Gradient descent from zero weights. A step that would raise the
/// objective is rejected and the step size halved, so the returned curve
/// (initial objective first) never increases.
pub fn fit(xs: &[FeatureVector], ys: &[usize], cfg: &MnlConfig) -> Result<(MnlParams, Vec<f64>), BenchmarkError> {
    if !(cfg.learning_rate > 0.0) || !(cfg.tolerance > 0.0) || !(cfg.l2 >= 0.0) || cfg.max_epochs == 0 {
        return Err(BenchmarkError::InvalidConfig(
            "MNL needs positive learning rate, tolerance and epochs, and non-negative l2".into(),
        ));
    }
    let mut params = MnlParams::zeros();
    let (mut loss, mut grad) = loss_and_gradient(&params, xs, ys, cfg.l2);
    if !loss.is_finite() {
        return Err(BenchmarkError::NonFiniteLoss { epoch: 0 });
    }
    let mut curve = vec![loss];
    let mut lr = cfg.learning_rate;

    for _ in 0..cfg.max_epochs {
        let candidate = step(&params, &grad, lr);
        let (new_loss, new_grad) = loss_and_gradient(&candidate, xs, ys, cfg.l2);
        if !new_loss.is_finite() || new_loss > loss {
            lr *= 0.5;
            if lr < 1e-12 {
                break;
            }
            continue;
        }
        let improvement = loss - new_loss;
        params = candidate;
        loss = new_loss;
        grad = new_grad;
        curve.push(loss);
        if improvement < cfg.tolerance {
            break;
        }
    }
    Ok((params, curve))
}
