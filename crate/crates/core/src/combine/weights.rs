//! SA, WA, EWA and meta-EWA combinations, replayed quarter by quarter.
//!
//! Weights for quarter `t` only use errors realized in quarters before `t`.

use serde::{Deserialize, Serialize};

use super::Panel;
use crate::data::QuarterIndex;
use crate::error::{Error, Result};

pub const DEFAULT_ETA_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.5, 1.0, 2.0];
pub const DEFAULT_META_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTrajectory {
    pub quarters: Vec<QuarterIndex>,
    pub models: Vec<String>,
    /// `weights[t][m]`, nonnegative and summing to one per quarter.
    pub weights: Vec<Vec<f64>>,
}

impl WeightTrajectory {
    pub fn dominant(&self, t: usize) -> Option<&str> {
        self.weights.get(t).map(|w| self.models[argmax(w)].as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub forecast: Vec<f64>,
    pub weights: WeightTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEwa {
    pub forecast: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub lambda: f64,
    /// One EWA aggregator per grid value.
    pub aggregators: Vec<Combination>,
    /// `meta_weights[t][j]` over the aggregators.
    pub meta_weights: Vec<Vec<f64>>,
    /// Implied model weights, `sum_j meta_weights[t][j] * w_j[t][m]`.
    pub effective: WeightTrajectory,
}

/// First index of the largest entry.
fn argmax(w: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in w.iter().enumerate() {
        if *v > w[best] {
            best = i;
        }
    }
    best
}

/// Argmax weight at quarter `t`; ties resolve to roster order.
pub fn dominant_model(traj: &WeightTrajectory, t: usize) -> Result<&str> {
    traj.dominant(t)
        .ok_or_else(|| Error::Alignment(format!("no weights at position {t}")))
}

fn dot(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b).sum()
}

fn check(forecasts: &Panel, actuals: &[f64]) -> Result<()> {
    forecasts.validate()?;
    if actuals.len() != forecasts.n_quarters() {
        return Err(Error::Alignment(format!(
            "{} actuals for {} forecast quarters",
            actuals.len(),
            forecasts.n_quarters()
        )));
    }
    if actuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Alignment("actuals contain missing values".into()));
    }
    Ok(())
}

fn replay(forecasts: &Panel, weights: Vec<Vec<f64>>) -> Combination {
    let forecast = forecasts.values.iter().zip(&weights).map(|(f, w)| dot(w, f)).collect();
    Combination {
        forecast,
        weights: WeightTrajectory {
            quarters: forecasts.quarters.clone(),
            models: forecasts.models.clone(),
            weights,
        },
    }
}

/// Softmax of `-scale * loss`, shifted by the minimum loss.
fn exp_weights(loss: &[f64], scale: f64) -> Vec<f64> {
    let min = loss.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = loss
        .iter()
        .map(|l| if scale == 0.0 { 1.0 } else { (-scale * (l - min)).exp() })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn combine_sa(forecasts: &Panel) -> Result<Combination> {
    forecasts.validate()?;
    let m = forecasts.n_models();
    let w = vec![vec![1.0 / m as f64; m]; forecasts.n_quarters()];
    Ok(replay(forecasts, w))
}

/// Inverse-RMSE weights over all errors realized so far; uniform in the
/// first quarter. Models with zero RMSE share all the weight.
pub fn combine_wa(forecasts: &Panel, actuals: &[f64]) -> Result<Combination> {
    check(forecasts, actuals)?;
    let m = forecasts.n_models();
    let mut sse = vec![0.0; m];
    let mut weights = Vec::with_capacity(actuals.len());
    for (t, row) in forecasts.values.iter().enumerate() {
        let w = if t == 0 {
            vec![1.0 / m as f64; m]
        } else {
            let rmse: Vec<f64> = sse.iter().map(|s| (s / t as f64).sqrt()).collect();
            let zeros = rmse.iter().filter(|r| **r == 0.0).count();
            if zeros > 0 {
                rmse.iter().map(|r| if *r == 0.0 { 1.0 / zeros as f64 } else { 0.0 }).collect()
            } else {
                let inv: Vec<f64> = rmse.iter().map(|r| 1.0 / r).collect();
                let s: f64 = inv.iter().sum();
                inv.into_iter().map(|v| v / s).collect()
            }
        };
        weights.push(w);
        for (k, f) in row.iter().enumerate() {
            sse[k] += (f - actuals[t]).powi(2);
        }
    }
    Ok(replay(forecasts, weights))
}

/// Exponential weights on cumulative squared error.
pub fn combine_ewa(forecasts: &Panel, actuals: &[f64], eta: f64) -> Result<Combination> {
    check(forecasts, actuals)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("EWA learning rate {eta} must be finite and nonnegative")));
    }
    let mut loss = vec![0.0; forecasts.n_models()];
    let mut weights = Vec::with_capacity(actuals.len());
    for (t, row) in forecasts.values.iter().enumerate() {
        weights.push(exp_weights(&loss, eta));
        for (k, f) in row.iter().enumerate() {
            loss[k] += (f - actuals[t]).powi(2);
        }
    }
    Ok(replay(forecasts, weights))
}

/// Second-tier exponential weighting over EWA aggregators, one per `eta`.
pub fn combine_meta_ewa(forecasts: &Panel, actuals: &[f64], eta_grid: &[f64], lambda: f64) -> Result<MetaEwa> {
    if eta_grid.is_empty() {
        return Err(Error::Domain("meta-EWA needs a nonempty learning-rate grid".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("meta-EWA lambda {lambda} must be finite and nonnegative")));
    }
    let aggregators: Vec<Combination> = eta_grid
        .iter()
        .map(|&eta| combine_ewa(forecasts, actuals, eta))
        .collect::<Result<_>>()?;
    let n = actuals.len();
    let mut loss = vec![0.0; aggregators.len()];
    let mut meta_weights = Vec::with_capacity(n);
    let mut forecast = Vec::with_capacity(n);
    let mut effective = Vec::with_capacity(n);
    for t in 0..n {
        let w = exp_weights(&loss, lambda);
        let fs: Vec<f64> = aggregators.iter().map(|a| a.forecast[t]).collect();
        forecast.push(dot(&w, &fs));
        effective.push(
            (0..forecasts.n_models())
                .map(|m| aggregators.iter().zip(&w).map(|(a, wj)| wj * a.weights.weights[t][m]).sum())
                .collect(),
        );
        for (j, f) in fs.iter().enumerate() {
            loss[j] += (f - actuals[t]).powi(2);
        }
        meta_weights.push(w);
    }
    Ok(MetaEwa {
        forecast,
        eta_grid: eta_grid.to_vec(),
        lambda,
        aggregators,
        meta_weights,
        effective: WeightTrajectory {
            quarters: forecasts.quarters.clone(),
            models: forecasts.models.clone(),
            weights: effective,
        },
    })
}
