//! Feed-forward and recurrent regressors trained by hand-written backprop.
//!
//! Both networks keep every parameter in one flat vector so the optimizer,
//! L2 penalty and gradient checks treat them uniformly.

pub mod gru;
pub mod mlp;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FitControl;
use crate::error::{Error, Result};

pub use gru::{gru_cell, GruCell, GruLearner, GruNet};
pub use mlp::{Activation, Mlp, MlpLearner};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule { max_epochs: 200, patience: 30, lr: 1e-2, batch_size: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub l2: f64,
    pub schedule: TrainSchedule,
    pub ig_steps: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden_dim: 16, num_layers: 1, dropout: 0.0, l2: 1e-4, schedule: TrainSchedule::default(), ig_steps: 50 }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Scalar-output network with an input gradient.
pub trait Differentiable {
    /// Evaluation-mode output.
    fn output(&self, input: &[f64]) -> f64;
    fn input_gradient(&self, input: &[f64]) -> Vec<f64>;
}

/// Network with flat parameters and a per-sample squared-error gradient.
pub trait Trainable: Differentiable {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Which parameters carry the L2 penalty (weights, not biases).
    fn penalized(&self) -> Vec<bool>;
    /// Adds `d (f(x) - y)^2 / d theta` to `grad` and returns the squared
    /// error. Dropout is applied only when `rng` is given.
    fn accumulate(&self, input: &[f64], target: f64, rng: Option<&mut ChaCha8Rng>, grad: &mut [f64]) -> f64;
}

/// `mean (f(x_i) - y_i)^2 + l2 * |W|^2` and its gradient, dropout off.
pub fn loss_and_grad<N: Trainable>(net: &N, inputs: &[Vec<f64>], targets: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.params().len()];
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        loss += net.accumulate(x, y, None, &mut grad);
    }
    let n = inputs.len() as f64;
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    add_l2(net, l2, &mut loss, &mut grad);
    (loss, grad)
}

fn add_l2<N: Trainable>(net: &N, l2: f64, loss: &mut f64, grad: &mut [f64]) {
    if l2 == 0.0 {
        return;
    }
    for ((g, &w), pen) in grad.iter_mut().zip(net.params()).zip(net.penalized()) {
        if pen {
            *loss += l2 * w * w;
            *g += 2.0 * l2 * w;
        }
    }
}

pub fn mse<N: Differentiable>(net: &N, inputs: &[Vec<f64>], targets: &[f64]) -> f64 {
    inputs.iter().zip(targets).map(|(x, y)| (net.output(x) - y).powi(2)).sum::<f64>() / inputs.len() as f64
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Epoch count whose weights were kept.
    pub epochs: usize,
    /// Validation MSE per epoch (empty without validation).
    pub history: Vec<f64>,
}

/// Minibatch Adam. With validation data, stops after `patience` epochs
/// without improvement and restores the best weights; without it, runs
/// exactly `budget` epochs.
#[allow(clippy::too_many_arguments)]
pub fn train<N: Trainable>(
    net: &mut N,
    inputs: &[Vec<f64>],
    targets: &[f64],
    validation: Option<(&[Vec<f64>], &[f64])>,
    cfg: &NetConfig,
    budget: usize,
    ctl: &mut FitControl<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    if inputs.is_empty() {
        return Err(Error::Training("no training rows".into()));
    }
    let np = net.params().len();
    let mut adam = Adam::new(np, cfg.schedule.lr);
    let pen = net.penalized();
    let batch = cfg.schedule.batch_size.max(1);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, net.params().to_vec());
    let mut grad = vec![0.0; np];
    for epoch in 1..=budget {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in chunk {
                let drop_rng = if cfg.dropout > 0.0 { Some(&mut *rng) } else { None };
                loss += net.accumulate(&inputs[i], targets[i], drop_rng, &mut grad);
            }
            let m = chunk.len() as f64;
            for (k, g) in grad.iter_mut().enumerate() {
                *g /= m;
                if pen[k] {
                    *g += 2.0 * cfg.l2 * net.params()[k];
                }
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            adam.step(net.params_mut(), &grad);
        }
        if let Some((vx, vy)) = validation {
            let v = mse(net, vx, vy);
            if !v.is_finite() {
                return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
            }
            history.push(v);
            if v < best.0 {
                best = (v, epoch, net.params().to_vec());
            }
            ctl.report(v)?;
            if epoch - best.1 >= cfg.schedule.patience {
                break;
            }
        }
    }
    if validation.is_some() {
        net.params_mut().copy_from_slice(&best.2);
        Ok(TrainReport { epochs: best.1.max(1), history })
    } else {
        Ok(TrainReport { epochs: budget, history })
    }
}

/// Riemann approximation of integrated gradients along the straight path
/// from `baseline` to `x` with `steps` right-endpoint evaluations.
pub fn integrated_gradients<N: Differentiable + ?Sized>(net: &N, x: &[f64], baseline: &[f64], steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    let d = x.len();
    let mut acc = vec![0.0; d];
    let mut point = vec![0.0; d];
    for s in 1..=steps {
        let a = s as f64 / steps as f64;
        for j in 0..d {
            point[j] = baseline[j] + a * (x[j] - baseline[j]);
        }
        for (o, g) in acc.iter_mut().zip(net.input_gradient(&point)) {
            *o += g;
        }
    }
    (0..d).map(|j| (x[j] - baseline[j]) * acc[j] / steps as f64).collect()
}

pub(crate) fn uniform_init(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-bound..bound);
    }
}

/// Inverted-dropout mask, `None` when inactive.
pub(crate) fn dropout_mask(rng: Option<&mut ChaCha8Rng>, rate: f64, n: usize) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    Some((0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
}

/// Worst central-difference relative error over all parameter gradients.
pub fn max_relative_gradient_error<N: Trainable + Clone>(
    net: &N,
    inputs: &[Vec<f64>],
    targets: &[f64],
    l2: f64,
) -> f64 {
    let (_, analytic) = loss_and_grad(net, inputs, targets, l2);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for k in 0..analytic.len() {
        let mut plus = net.clone();
        plus.params_mut()[k] += h;
        let mut minus = net.clone();
        minus.params_mut()[k] -= h;
        let fd = (loss_and_grad(&plus, inputs, targets, l2).0 - loss_and_grad(&minus, inputs, targets, l2).0) / (2.0 * h);
        let denom = analytic[k].abs().max(fd.abs()).max(1e-7);
        worst = worst.max((analytic[k] - fd).abs() / denom);
    }
    worst
}
