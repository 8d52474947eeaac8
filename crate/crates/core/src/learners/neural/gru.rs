//! Stacked GRU regressor over trailing windows of quarterly features.
//!
//! Cell: `z = s(Wz x + Uz h + bz)`, `r = s(Wr x + Ur h + br)`,
//! `c = tanh(Wh x + Uh (r * h) + bh)`, `h' = (1 - z) * h + z * c`.
//! The forecast is a linear read-out of the top layer's last state.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dropout_mask, integrated_gradients, train, uniform_init, Differentiable, NetConfig, Trainable};
use crate::error::{Error, Result};
use crate::learners::{Dataset, FitControl, Fitted, Learner};
use crate::par::stream_rng;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Borrowed view of one layer's gate parameters (row-major matrices).
#[derive(Debug, Clone, Copy)]
pub struct GruCell<'a> {
    pub input: usize,
    pub hidden: usize,
    pub wz: &'a [f64],
    pub uz: &'a [f64],
    pub bz: &'a [f64],
    pub wr: &'a [f64],
    pub ur: &'a [f64],
    pub br: &'a [f64],
    pub wh: &'a [f64],
    pub uh: &'a [f64],
    pub bh: &'a [f64],
}

/// Intermediate values of one cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

fn affine(w: &[f64], x: &[f64], u: &[f64], h: &[f64], b: &[f64], rows: usize) -> Vec<f64> {
    let (din, dh) = (x.len(), h.len());
    (0..rows)
        .map(|i| {
            let mut v = b[i];
            for j in 0..din {
                v += w[i * din + j] * x[j];
            }
            for j in 0..dh {
                v += u[i * dh + j] * h[j];
            }
            v
        })
        .collect()
}

pub fn gru_step(h_prev: &[f64], x: &[f64], c: &GruCell<'_>) -> GruStep {
    let hd = c.hidden;
    let z: Vec<f64> = affine(c.wz, x, c.uz, h_prev, c.bz, hd).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine(c.wr, x, c.ur, h_prev, c.br, hd).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let candidate: Vec<f64> = affine(c.wh, x, c.uh, &rh, c.bh, hd).into_iter().map(f64::tanh).collect();
    let h = (0..hd).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i]).collect();
    GruStep { z, r, candidate, h }
}

pub fn gru_cell(h_prev: &[f64], x: &[f64], c: &GruCell<'_>) -> Vec<f64> {
    gru_step(h_prev, x, c).h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruNet {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Time steps per example.
    pub steps: usize,
    pub dropout: f64,
    pub params: Vec<f64>,
}

struct LayerCache {
    inputs: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
    steps: Vec<GruStep>,
    masks: Vec<Option<Vec<f64>>>,
}

impl GruNet {
    pub fn new(input: usize, hidden: usize, layers: usize, steps: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut net = GruNet { input, hidden, layers: layers.max(1), steps: steps.max(1), dropout, params: vec![] };
        net.params = vec![0.0; net.param_count()];
        for l in 0..net.layers {
            let din = net.layer_input(l);
            let base = net.layer_offset(l);
            let block = [hidden * din, hidden * hidden, hidden];
            let mut off = base;
            for _ in 0..3 {
                uniform_init(rng, &mut net.params[off..off + block[0]], din);
                uniform_init(rng, &mut net.params[off + block[0]..off + block[0] + block[1]], hidden);
                uniform_init(rng, &mut net.params[off + block[0] + block[1]..off + block[0] + block[1] + block[2]], din);
                off += block.iter().sum::<usize>();
            }
        }
        let o = net.output_offset();
        uniform_init(rng, &mut net.params[o..o + hidden + 1], hidden);
        net
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    fn layer_size(&self, l: usize) -> usize {
        3 * (self.hidden * self.layer_input(l) + self.hidden * self.hidden + self.hidden)
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.layer_size(k)).sum()
    }

    fn output_offset(&self) -> usize {
        self.layer_offset(self.layers)
    }

    fn param_count(&self) -> usize {
        self.output_offset() + self.hidden + 1
    }

    /// Offsets of `(W, U, b)` for gate `g` (0 = z, 1 = r, 2 = candidate).
    fn gate_offsets(&self, l: usize, g: usize) -> (usize, usize, usize) {
        let (din, h) = (self.layer_input(l), self.hidden);
        let block = h * din + h * h + h;
        let w = self.layer_offset(l) + g * block;
        (w, w + h * din, w + h * din + h * h)
    }

    pub fn cell(&self, l: usize) -> GruCell<'_> {
        let (din, h) = (self.layer_input(l), self.hidden);
        let p = &self.params;
        let view = |g: usize| {
            let (w, u, b) = self.gate_offsets(l, g);
            (&p[w..w + h * din], &p[u..u + h * h], &p[b..b + h])
        };
        let (wz, uz, bz) = view(0);
        let (wr, ur, br) = view(1);
        let (wh, uh, bh) = view(2);
        GruCell { input: din, hidden: h, wz, uz, bz, wr, ur, br, wh, uh, bh }
    }

    fn split_input(&self, seq: &[f64]) -> Vec<Vec<f64>> {
        seq.chunks(self.input).map(<[f64]>::to_vec).collect()
    }

    fn forward_cache(&self, seq: &[f64], mut rng: Option<&mut ChaCha8Rng>) -> (Vec<LayerCache>, Option<Vec<f64>>, f64) {
        let mut xs = self.split_input(seq);
        let mut caches = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let mut masks = Vec::with_capacity(xs.len());
            if l > 0 {
                for x in xs.iter_mut() {
                    let m = dropout_mask(rng.as_deref_mut(), self.dropout, x.len());
                    if let Some(m) = &m {
                        x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                    }
                    masks.push(m);
                }
            } else {
                masks.resize(xs.len(), None);
            }
            let cell = self.cell(l);
            let mut h = vec![0.0; self.hidden];
            let mut states = Vec::with_capacity(xs.len());
            let mut steps = Vec::with_capacity(xs.len());
            for x in &xs {
                states.push(h.clone());
                let s = gru_step(&h, x, &cell);
                h = s.h.clone();
                steps.push(s);
            }
            let next: Vec<Vec<f64>> = steps.iter().map(|s| s.h.clone()).collect();
            caches.push(LayerCache { inputs: xs, states, steps, masks });
            xs = next;
        }
        let mut last = xs.pop().unwrap_or_else(|| vec![0.0; self.hidden]);
        let out_mask = dropout_mask(rng, self.dropout, self.hidden);
        if let Some(m) = &out_mask {
            last.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        let o = self.output_offset();
        let y = self.params[o + self.hidden] + (0..self.hidden).map(|i| self.params[o + i] * last[i]).sum::<f64>();
        (caches, out_mask, y)
    }

    /// Backpropagation through time; returns the gradient at the input sequence.
    fn backward(&self, caches: &[LayerCache], out_mask: &Option<Vec<f64>>, d_out: f64, mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let hd = self.hidden;
        let o = self.output_offset();
        let top = &caches[self.layers - 1];
        let t_len = top.steps.len();
        let mut d_last: Vec<f64> = (0..hd).map(|i| self.params[o + i] * d_out).collect();
        if let Some(g) = grad.as_deref_mut() {
            let last = &top.steps[t_len - 1].h;
            for i in 0..hd {
                let m = out_mask.as_ref().map_or(1.0, |m| m[i]);
                g[o + i] += d_out * last[i] * m;
            }
            g[o + hd] += d_out;
        }
        if let Some(m) = out_mask {
            d_last.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        // Gradient flowing into each time step's output of the current layer.
        let mut d_out_seq = vec![vec![0.0; hd]; t_len];
        d_out_seq[t_len - 1] = d_last;
        for l in (0..self.layers).rev() {
            let cache = &caches[l];
            let din = self.layer_input(l);
            let offs = [self.gate_offsets(l, 0), self.gate_offsets(l, 1), self.gate_offsets(l, 2)];
            let p = &self.params;
            let mut d_in = vec![vec![0.0; din]; t_len];
            let mut dh_next = vec![0.0; hd];
            for t in (0..t_len).rev() {
                let s = &cache.steps[t];
                let hp = &cache.states[t];
                let x = &cache.inputs[t];
                let dh: Vec<f64> = (0..hd).map(|i| dh_next[i] + d_out_seq[t][i]).collect();
                let mut dhp: Vec<f64> = (0..hd).map(|i| dh[i] * (1.0 - s.z[i])).collect();
                let da_z: Vec<f64> = (0..hd).map(|i| dh[i] * (s.candidate[i] - hp[i]) * s.z[i] * (1.0 - s.z[i])).collect();
                let da_h: Vec<f64> = (0..hd).map(|i| dh[i] * s.z[i] * (1.0 - s.candidate[i].powi(2))).collect();
                let rh: Vec<f64> = (0..hd).map(|i| s.r[i] * hp[i]).collect();
                let (_, uh, _) = offs[2];
                let mut d_rh = vec![0.0; hd];
                for i in 0..hd {
                    for j in 0..hd {
                        d_rh[j] += p[uh + i * hd + j] * da_h[i];
                    }
                }
                let da_r: Vec<f64> = (0..hd).map(|j| d_rh[j] * hp[j] * s.r[j] * (1.0 - s.r[j])).collect();
                for j in 0..hd {
                    dhp[j] += d_rh[j] * s.r[j];
                }
                for (g, da, hin) in [(0usize, &da_z, hp), (1, &da_r, hp), (2, &da_h, &rh)] {
                    let (w, u, b) = offs[g];
                    for i in 0..hd {
                        let d = da[i];
                        if d == 0.0 {
                            continue;
                        }
                        for j in 0..din {
                            d_in[t][j] += p[w + i * din + j] * d;
                        }
                        if g < 2 {
                            for j in 0..hd {
                                dhp[j] += p[u + i * hd + j] * d;
                            }
                        }
                        if let Some(gr) = grad.as_deref_mut() {
                            gr[b + i] += d;
                            for j in 0..din {
                                gr[w + i * din + j] += d * x[j];
                            }
                            for j in 0..hd {
                                gr[u + i * hd + j] += d * hin[j];
                            }
                        }
                    }
                }
                dh_next = dhp;
            }
            for t in 0..t_len {
                if let Some(m) = &cache.masks[t] {
                    d_in[t].iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
            }
            if l == 0 {
                return d_in.concat();
            }
            d_out_seq = d_in;
        }
        unreachable!("network has at least one layer")
    }
}

impl Differentiable for GruNet {
    fn output(&self, seq: &[f64]) -> f64 {
        self.forward_cache(seq, None).2
    }

    fn input_gradient(&self, seq: &[f64]) -> Vec<f64> {
        let (caches, mask, _) = self.forward_cache(seq, None);
        self.backward(&caches, &mask, 1.0, None)
    }
}

impl Trainable for GruNet {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn penalized(&self) -> Vec<bool> {
        let mut out = vec![true; self.params.len()];
        for l in 0..self.layers {
            for g in 0..3 {
                let (_, _, b) = self.gate_offsets(l, g);
                out[b..b + self.hidden].iter_mut().for_each(|v| *v = false);
            }
        }
        let last = out.len() - 1;
        out[last] = false;
        out
    }

    fn accumulate(&self, seq: &[f64], y: f64, rng: Option<&mut ChaCha8Rng>, grad: &mut [f64]) -> f64 {
        let (caches, mask, out) = self.forward_cache(seq, rng);
        let e = out - y;
        self.backward(&caches, &mask, 2.0 * e, Some(grad));
        e * e
    }
}

/// Trailing `window` rows ending at `row`, flattened oldest first. Rows
/// before the start of the data repeat the first row.
pub fn window_at(data: &Dataset, row: usize, window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(window * data.n_features());
    for k in 0..window {
        let r = (row + k + 1).saturating_sub(window);
        out.extend(data.x.row(r).iter());
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct GruLearner {
    pub config: NetConfig,
    pub window: usize,
}

struct GruFitted {
    net: GruNet,
    window: usize,
    epochs: usize,
    ig_steps: usize,
}

impl Learner for GruLearner {
    fn fit(&self, data: &Dataset, rows: &[usize], ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        let cfg = &self.config;
        let mut rng = stream_rng(ctl.seed, 0);
        let w = self.window.max(1);
        let mut net = GruNet::new(data.n_features(), cfg.hidden_dim.max(1), cfg.num_layers, w, cfg.dropout, &mut rng);
        let xs: Vec<Vec<f64>> = rows.iter().map(|&r| window_at(data, r, w)).collect();
        let ys: Vec<f64> = data.targets(rows)?.iter().copied().collect();
        let val = ctl.validation.clone();
        let val_data = match &val {
            Some(v) => Some((
                v.iter().map(|&r| window_at(data, r, w)).collect::<Vec<_>>(),
                data.targets(v)?.iter().copied().collect::<Vec<f64>>(),
            )),
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
        Ok(Box::new(GruFitted { net, window: w, epochs: report.epochs, ig_steps: cfg.ig_steps }))
    }
}

impl Fitted for GruFitted {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        let v = self.net.output(&window_at(data, row, self.window));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric("gru output is not finite".into()))
        }
    }

    /// Integrated gradients over the whole window, summed across time steps.
    fn importance(&self, data: &Dataset, eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        if eval_rows.is_empty() {
            return Ok(None);
        }
        let p = data.n_features();
        let mut acc = vec![0.0; p];
        for &r in eval_rows {
            let seq = window_at(data, r, self.window);
            let ig = integrated_gradients(&self.net, &seq, &vec![0.0; seq.len()], self.ig_steps);
            for (k, v) in ig.into_iter().enumerate() {
                acc[k % p] += v;
            }
        }
        Ok(Some(acc.into_iter().map(|v| v / eval_rows.len() as f64).collect()))
    }

    fn epochs(&self) -> Option<usize> {
        Some(self.epochs)
    }
}
