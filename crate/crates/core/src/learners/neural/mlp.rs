//! Multilayer perceptron with dropout on hidden activations.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dropout_mask, integrated_gradients, train, uniform_init, Differentiable, NetConfig, Trainable};
use crate::error::{Error, Result};
use crate::learners::{Dataset, FitControl, Fitted, Learner};
use crate::par::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Layers `widths[0] -> .. -> 1`; hidden layers use `activation`, the
/// output is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], activation: Activation, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut net = Mlp { widths, activation, dropout, params: vec![] };
        net.params = vec![0.0; net.param_count()];
        for l in 1..net.widths.len() {
            let (w, b) = net.layer_offsets(l);
            let fan_in = net.widths[l - 1];
            let end = b + net.widths[l];
            uniform_init(rng, &mut net.params[w..end], fan_in);
        }
        net
    }

    fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offsets of `W_l` (row-major, out x in) and `b_l` for layer `l >= 1`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 1..l {
            off += self.widths[k] * self.widths[k - 1] + self.widths[k];
        }
        (off, off + self.widths[l] * self.widths[l - 1])
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn affine(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer_offsets(l);
        let (out, inp) = (self.widths[l], self.widths[l - 1]);
        (0..out)
            .map(|i| {
                let row = &self.params[w + i * inp..w + (i + 1) * inp];
                self.params[b + i] + row.iter().zip(a).map(|(u, v)| u * v).sum::<f64>()
            })
            .collect()
    }

    /// Forward pass keeping pre-activations, post-dropout activations and masks.
    fn forward_cache(&self, x: &[f64], mut rng: Option<&mut ChaCha8Rng>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Option<Vec<f64>>>, f64) {
        let mut acts = vec![x.to_vec()];
        let mut pre = vec![vec![]];
        let mut masks = vec![None];
        for l in 1..self.layers() {
            let z = self.affine(l, acts.last().unwrap());
            let mut h: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
            let mask = dropout_mask(rng.as_deref_mut(), self.dropout, h.len());
            if let Some(m) = &mask {
                h.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            pre.push(z);
            acts.push(h);
            masks.push(mask);
        }
        let out = self.affine(self.layers(), acts.last().unwrap())[0];
        (pre, acts, masks, out)
    }

    /// Backpropagates `d_out` and returns the gradient at the input.
    fn backward(
        &self,
        pre: &[Vec<f64>],
        acts: &[Vec<f64>],
        masks: &[Option<Vec<f64>>],
        d_out: f64,
        mut grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut delta = vec![d_out];
        for l in (1..=self.layers()).rev() {
            let (w, b) = self.layer_offsets(l);
            let (out, inp) = (self.widths[l], self.widths[l - 1]);
            let a = &acts[l - 1];
            if let Some(g) = grad.as_deref_mut() {
                for i in 0..out {
                    g[b + i] += delta[i];
                    for j in 0..inp {
                        g[w + i * inp + j] += delta[i] * a[j];
                    }
                }
            }
            let mut da = vec![0.0; inp];
            for i in 0..out {
                for j in 0..inp {
                    da[j] += self.params[w + i * inp + j] * delta[i];
                }
            }
            if l > 1 {
                if let Some(m) = &masks[l - 1] {
                    da.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
                delta = da.iter().zip(&pre[l - 1]).map(|(d, &z)| d * self.activation.derivative(z)).collect();
            } else {
                return da;
            }
        }
        unreachable!("network has at least one layer")
    }
}

impl Differentiable for Mlp {
    fn output(&self, x: &[f64]) -> f64 {
        self.forward_cache(x, None).3
    }

    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (pre, acts, masks, _) = self.forward_cache(x, None);
        self.backward(&pre, &acts, &masks, 1.0, None)
    }
}

impl Trainable for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn penalized(&self) -> Vec<bool> {
        let mut out = vec![false; self.params.len()];
        for l in 1..=self.layers() {
            let (w, b) = self.layer_offsets(l);
            out[w..b].iter_mut().for_each(|v| *v = true);
        }
        out
    }

    fn accumulate(&self, x: &[f64], y: f64, rng: Option<&mut ChaCha8Rng>, grad: &mut [f64]) -> f64 {
        let (pre, acts, masks, out) = self.forward_cache(x, rng);
        let e = out - y;
        self.backward(&pre, &acts, &masks, 2.0 * e, Some(grad));
        e * e
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpLearner {
    pub config: NetConfig,
}

struct MlpFitted {
    net: Mlp,
    epochs: usize,
    ig_steps: usize,
}

fn rows_of(data: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&r| data.row(r)).collect()
}

impl Learner for MlpLearner {
    fn fit(&self, data: &Dataset, rows: &[usize], ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        let cfg = &self.config;
        let mut rng = stream_rng(ctl.seed, 0);
        let hidden = vec![cfg.hidden_dim.max(1); cfg.num_layers.max(1)];
        let mut net = Mlp::new(data.n_features(), &hidden, Activation::Relu, cfg.dropout, &mut rng);
        let xs = rows_of(data, rows);
        let ys: Vec<f64> = data.targets(rows)?.iter().copied().collect();
        let val = ctl.validation.clone();
        let val_data = match &val {
            Some(v) => Some((rows_of(data, v), data.targets(v)?.iter().copied().collect::<Vec<f64>>())),
            None => None,
        };
        let budget = ctl.epochs.unwrap_or(cfg.schedule.max_epochs).min(cfg.schedule.max_epochs).max(1);
        let report = train(
            &mut net,
            &xs,
            &ys,
            val_data.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
            cfg,
            budget,
            ctl,
            &mut rng,
        )?;
        Ok(Box::new(MlpFitted { net, epochs: report.epochs, ig_steps: cfg.ig_steps }))
    }
}

impl Fitted for MlpFitted {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        let v = self.net.output(&data.row(row));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric("mlp output is not finite".into()))
        }
    }

    fn importance(&self, data: &Dataset, eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        if eval_rows.is_empty() {
            return Ok(None);
        }
        let p = data.n_features();
        let base = vec![0.0; p];
        let mut acc = vec![0.0; p];
        for &r in eval_rows {
            for (a, v) in acc.iter_mut().zip(integrated_gradients(&self.net, &data.row(r), &base, self.ig_steps)) {
                *a += v;
            }
        }
        Ok(Some(acc.into_iter().map(|v| v / eval_rows.len() as f64).collect()))
    }

    fn epochs(&self) -> Option<usize> {
        Some(self.epochs)
    }
}
