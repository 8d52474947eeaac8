//! Augmented Dickey-Fuller unit-root screening (constant, no trend).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::frame::{ColumnKind, SeriesFrame};
use super::transform::TransformSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats;

// MacKinnon (1994) approximate p-value surface, constant-only, one series.
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const TAU_SMALLP: [f64; 3] = [2.1659, 1.4412, 0.038269];
const TAU_LARGEP: [f64; 4] = [1.7339, 0.93202 * 1e-1, -0.12745 * 1e-1, -0.010368 * 1e-2];

// MacKinnon (2010) finite-sample critical values, constant-only: 1%, 5%, 10%.
const CRIT: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub nobs: usize,
    /// Critical values at 1%, 5% and 10%.
    pub critical: [f64; 3],
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Approximate p-value of an ADF t-statistic (constant-only regression).
pub fn mackinnon_p(stat: f64) -> f64 {
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let z = if stat <= TAU_STAR {
        poly(&TAU_SMALLP, stat)
    } else {
        poly(&TAU_LARGEP, stat)
    };
    stats::norm_cdf(z)
}

pub fn critical_values(nobs: usize) -> [f64; 3] {
    let inv = 1.0 / nobs as f64;
    CRIT.map(|c| poly(&c, inv))
}

/// ADF test with a constant and a fixed number of lagged differences.
pub fn adf_test(x: &[f64], lags: usize) -> Result<AdfResult> {
    let n = x.len();
    if n < lags + 4 {
        return Err(Error::Shape(format!("ADF needs more than {} observations, got {n}", lags + 3)));
    }
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = dx.len() - lags;
    let k = 2 + lags;
    let mut design = DMatrix::zeros(nobs, k);
    let mut resp = DVector::zeros(nobs);
    for r in 0..nobs {
        let t = r + lags; // index into dx
        resp[r] = dx[t];
        design[(r, 0)] = 1.0;
        design[(r, 1)] = x[t];
        for l in 1..=lags {
            design[(r, 1 + l)] = dx[t - l];
        }
    }
    let xtx = design.transpose() * &design;
    let (beta, _) = linalg::ols(&design, &resp);
    let resid = &resp - &design * &beta;
    let dof = nobs as f64 - k as f64;
    let sigma2 = resid.norm_squared() / dof;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Numeric("ADF design matrix is singular".into()))?;
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    let statistic = beta[1] / se;
    Ok(AdfResult {
        statistic,
        p_value: mackinnon_p(statistic),
        lags,
        nobs,
        critical: critical_values(nobs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    UnitRoot,
    ZeroVariance,
    LeadingGaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScreen {
    pub column: String,
    pub retained: bool,
    pub reason: Option<DropReason>,
    pub adf: Option<AdfResult>,
}

/// Drops continuous columns whose ADF test fails to reject a unit root at
/// `spec.adf_alpha`, and constant columns. Returns one record per tested column.
pub fn adf_filter(frame: &SeriesFrame, spec: &TransformSpec) -> Result<(SeriesFrame, Vec<ColumnScreen>)> {
    let mut screens = Vec::new();
    let mut drop = Vec::new();
    for col in frame.columns().iter().filter(|c| c.kind == ColumnKind::Continuous) {
        let first = col.values[0];
        if col.values.iter().all(|&v| v == first) {
            drop.push(col.name.clone());
            screens.push(ColumnScreen {
                column: col.name.clone(),
                retained: false,
                reason: Some(DropReason::ZeroVariance),
                adf: None,
            });
            continue;
        }
        let res = adf_test(&col.values, spec.adf_lags)?;
        let retained = res.p_value <= spec.adf_alpha;
        if !retained {
            drop.push(col.name.clone());
        }
        screens.push(ColumnScreen {
            column: col.name.clone(),
            retained,
            reason: (!retained).then_some(DropReason::UnitRoot),
            adf: Some(res),
        });
    }
    let mut out = frame.clone();
    out.drop_columns(&drop);
    Ok((out, screens))
}
