//! Model Confidence Set by iterative elimination with a moving-block
//! bootstrap of mean losses.
//!
//! Elimination runs until one model is left; each step's p-value is the
//! running maximum of the equivalence-test p-values so far, and the set at
//! level `alpha` is every model whose p-value is at least `alpha`.

use serde::{Deserialize, Serialize};

use super::LossMatrix;
use crate::bootstrap::resample_segment;
use crate::error::{Error, Result};
use crate::par::{map_range, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McsStatistic {
    /// Largest standardized loss of a model relative to the set average.
    Tmax,
    /// Largest absolute standardized pairwise loss differential.
    TR,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    pub alpha: f64,
    pub replicates: usize,
    pub block_len: usize,
    pub statistic: McsStatistic,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        McsConfig { alpha: 0.10, replicates: 10_000, block_len: 4, statistic: McsStatistic::Tmax, seed: 42 }
    }
}

impl McsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("MCS alpha {} outside (0, 1)", self.alpha)));
        }
        if self.replicates < 1 || self.block_len < 1 {
            return Err(Error::Config("MCS needs at least one replicate and block length >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub models: Vec<String>,
    /// MCS p-value per model, aligned with `models`.
    pub pvalues: Vec<f64>,
    /// Models in the order they were eliminated; the last one is never
    /// eliminated and closes the list.
    pub elimination_order: Vec<String>,
    pub survivors: Vec<String>,
    pub alpha: f64,
}

impl McsResult {
    /// Best first: reverse elimination order.
    pub fn ranking(&self) -> Vec<String> {
        self.elimination_order.iter().rev().cloned().collect()
    }

    pub fn contains(&self, model: &str) -> bool {
        self.survivors.iter().any(|m| m == model)
    }
}

/// `x / s` with `0 / 0 = 0`.
fn ratio(x: f64, s: f64) -> f64 {
    if s > 0.0 {
        x / s
    } else if x == 0.0 {
        0.0
    } else {
        x.signum() * f64::INFINITY
    }
}

struct Step {
    stat: f64,
    boot: Vec<f64>,
    worst: usize,
}

fn tmax_step(active: &[usize], mean: &[f64], boot: &[Vec<f64>]) -> Step {
    let m = active.len() as f64;
    let rel = |l: &[f64], i: usize| active.iter().map(|&j| l[i] - l[j]).sum::<f64>() / m;
    let d: Vec<f64> = active.iter().map(|&i| rel(mean, i)).collect();
    let dev: Vec<Vec<f64>> = boot
        .iter()
        .map(|lb| active.iter().zip(&d).map(|(&i, di)| rel(lb, i) - di).collect())
        .collect();
    let sd: Vec<f64> = (0..active.len())
        .map(|k| (dev.iter().map(|v| v[k] * v[k]).sum::<f64>() / boot.len() as f64).sqrt())
        .collect();
    let t: Vec<f64> = d.iter().zip(&sd).map(|(x, s)| ratio(*x, *s)).collect();
    let mut worst = 0;
    for k in 1..t.len() {
        if t[k] > t[worst] {
            worst = k;
        }
    }
    let bstat = dev
        .iter()
        .map(|v| v.iter().zip(&sd).map(|(x, s)| ratio(*x, *s)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Step { stat: t[worst], boot: bstat, worst }
}

fn tr_step(active: &[usize], mean: &[f64], boot: &[Vec<f64>]) -> Step {
    let k = active.len();
    let mut stat: f64 = 0.0;
    let mut bstat = vec![0.0f64; boot.len()];
    let mut row_max = vec![f64::NEG_INFINITY; k];
    for a in 0..k {
        for b in (a + 1)..k {
            let (i, j) = (active[a], active[b]);
            let d = mean[i] - mean[j];
            let dev: Vec<f64> = boot.iter().map(|l| (l[i] - l[j]) - d).collect();
            let sd = (dev.iter().map(|v| v * v).sum::<f64>() / boot.len() as f64).sqrt();
            let t = ratio(d, sd);
            stat = stat.max(t.abs());
            row_max[a] = row_max[a].max(t);
            row_max[b] = row_max[b].max(-t);
            for (bs, v) in bstat.iter_mut().zip(&dev) {
                *bs = bs.max(ratio(*v, sd).abs());
            }
        }
    }
    let mut worst = 0;
    for a in 1..k {
        if row_max[a] > row_max[worst] {
            worst = a;
        }
    }
    Step { stat, boot: bstat, worst }
}

pub fn mcs(losses: &LossMatrix, cfg: &McsConfig) -> Result<McsResult> {
    cfg.validate()?;
    losses.validate()?;
    let n = losses.n_quarters();
    let k = losses.n_models();
    if n < cfg.block_len {
        return Err(Error::Domain(format!("MCS needs at least {} quarters, got {n}", cfg.block_len)));
    }
    let col_means = |rows: &mut dyn Iterator<Item = usize>| {
        let mut acc = vec![0.0; k];
        let mut cnt = 0.0;
        for t in rows {
            for (a, v) in acc.iter_mut().zip(&losses.values[t]) {
                *a += v;
            }
            cnt += 1.0;
        }
        acc.into_iter().map(|a| a / cnt).collect::<Vec<f64>>()
    };
    let mean = col_means(&mut (0..n));
    let idx: Vec<usize> = (0..n).collect();
    let boot: Vec<Vec<f64>> = map_range(cfg.replicates, |b| {
        let rows = resample_segment(&idx, cfg.block_len, &mut stream_rng(cfg.seed, b as u64));
        col_means(&mut rows.into_iter())
    });

    let mut active: Vec<usize> = (0..k).collect();
    let mut pvalues = vec![1.0; k];
    let mut order = Vec::with_capacity(k);
    let mut running: f64 = 0.0;
    while active.len() > 1 {
        let step = match cfg.statistic {
            McsStatistic::Tmax => tmax_step(&active, &mean, &boot),
            McsStatistic::TR => tr_step(&active, &mean, &boot),
        };
        let exceed = step.boot.iter().filter(|b| **b >= step.stat).count();
        running = running.max(exceed as f64 / boot.len() as f64);
        let out = active.remove(step.worst);
        pvalues[out] = running;
        order.push(out);
    }
    order.push(active[0]);
    let survivors = (0..k).filter(|&i| pvalues[i] >= cfg.alpha).map(|i| losses.models[i].clone()).collect();
    Ok(McsResult {
        models: losses.models.clone(),
        pvalues,
        elimination_order: order.into_iter().map(|i| losses.models[i].clone()).collect(),
        survivors,
        alpha: cfg.alpha,
    })
}
