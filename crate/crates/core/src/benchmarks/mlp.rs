//! One-hidden-layer rectifier network with a softmax output, trained with
//! Adam on minibatches.
//!
//! After every epoch the full-training-set objective is evaluated. An epoch
//! that raises it is rolled back and the step size halved, so the recorded
//! loss curve is non-increasing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, BenchmarkError, FeatureVector, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    pub seed: u64,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    /// Epochs without a `tolerance` improvement before stopping.
    pub n_iter_no_change: usize,
    pub l2: f64,
    pub batch_size: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            seed: 42,
            hidden_units: 100,
            learning_rate: 1e-3,
            max_epochs: 200,
            tolerance: 1e-4,
            n_iter_no_change: 10,
            l2: 1e-4,
            batch_size: 200,
        }
    }
}

/// Dense weights are row-major: `w1[h * n_inputs + i]`, `w2[k * n_hidden + h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform initialisation of weights and biases.
    pub fn init(n_inputs: usize, n_hidden: usize, rng: &mut impl Rng) -> Self {
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            (w, b)
        };
        let (w1, b1) = layer(n_inputs, n_hidden);
        let (w2, b2) = layer(n_hidden, N_CLASSES);
        Mlp { n_inputs, n_hidden, w1, b1, w2, b2 }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters as one vector: w1, b1, w2, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.n_params());
        let (a, rest) = v.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_hidden)
            .map(|h| {
                let row = &self.w1[h * self.n_inputs..(h + 1) * self.n_inputs];
                let z = self.b1[h] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                z.max(0.0)
            })
            .collect()
    }

    fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        (0..N_CLASSES)
            .map(|k| {
                let row = &self.w2[k * self.n_hidden..(k + 1) * self.n_hidden];
                self.b2[k] + row.iter().zip(hidden).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(&self.hidden(x)))
    }

    /// Mean cross-entropy over the batch plus `l2 / (2 n)` times the squared
    /// weight norm (biases unpenalised), and its gradient in flat layout.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[usize], l2: f64) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let (nw1, nb1, nw2) = (self.w1.len(), self.b1.len(), self.w2.len());
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let a = self.hidden(x);
            let z = self.logits(&a);
            let p = softmax(&z);
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            let dz: Vec<f64> = (0..N_CLASSES)
                .map(|k| (p[k] - if k == y { 1.0 } else { 0.0 }) / n)
                .collect();
            let mut da = vec![0.0; self.n_hidden];
            for k in 0..N_CLASSES {
                grad[nw1 + nb1 + nw2 + k] += dz[k];
                for h in 0..self.n_hidden {
                    grad[nw1 + nb1 + k * self.n_hidden + h] += dz[k] * a[h];
                    da[h] += dz[k] * self.w2[k * self.n_hidden + h];
                }
            }
            for h in 0..self.n_hidden {
                if a[h] <= 0.0 {
                    continue;
                }
                grad[nw1 + h] += da[h];
                for i in 0..self.n_inputs {
                    grad[h * self.n_inputs + i] += da[h] * x[i];
                }
            }
        }
        loss /= n;
        let scale = l2 / n;
        let mut sq = 0.0;
        for (i, w) in self.w1.iter().enumerate() {
            sq += w * w;
            grad[i] += scale * w;
        }
        for (i, w) in self.w2.iter().enumerate() {
            sq += w * w;
            grad[nw1 + nb1 + i] += scale * w;
        }
        (loss + 0.5 * scale * sq, grad)
    }
}

#[derive(Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

pub fn fit(xs: &[FeatureVector], ys: &[usize], cfg: &NeuralConfig) -> Result<(Mlp, Vec<f64>), BenchmarkError> {
    if cfg.hidden_units == 0 || cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.learning_rate > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(BenchmarkError::InvalidConfig(
            "NN needs positive hidden units, batch size, epochs, learning rate and tolerance".into(),
        ));
    }
    let inputs: Vec<&[f64]> = xs.iter().map(|x| &x.0[..]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Mlp::init(xs[0].0.len(), cfg.hidden_units, &mut rng);
    let mut params = model.to_flat();
    let mut adam = Adam::new(params.len());
    let mut lr = cfg.learning_rate;

    let full_loss = |m: &Mlp| m.loss_and_gradient(&inputs, ys, cfg.l2).0;
    let mut loss = full_loss(&model);
    if !loss.is_finite() {
        return Err(BenchmarkError::NonFiniteLoss { epoch: 0 });
    }
    let mut curve = vec![loss];
    let mut best = loss;
    let mut stale = 0;
    let batch = cfg.batch_size.min(xs.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();

    for _ in 0..cfg.max_epochs {
        let snapshot = (params.clone(), adam.clone());
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<&[f64]> = chunk.iter().map(|i| inputs[*i]).collect();
            let by: Vec<usize> = chunk.iter().map(|i| ys[*i]).collect();
            // Penalty is scaled by the full sample size, as for the epoch objective.
            let (_, grad) = model.loss_and_gradient(&bx, &by, cfg.l2 * bx.len() as f64 / xs.len() as f64);
            adam.step(&mut params, &grad, lr);
            model.set_flat(&params);
        }
        let new_loss = full_loss(&model);
        if !new_loss.is_finite() || new_loss > loss {
            (params, adam) = snapshot;
            model.set_flat(&params);
            lr *= 0.5;
            stale += 1;
        } else {
            loss = new_loss;
            curve.push(loss);
            if loss < best - cfg.tolerance {
                stale = 0;
            } else {
                stale += 1;
            }
            best = best.min(loss);
        }
        if stale >= cfg.n_iter_no_change || lr < 1e-12 {
            break;
        }
    }
    Ok((model, curve))
}
