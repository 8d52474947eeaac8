//! Giacomini-White test with an intercept-only instrument and a WEAVE
//! (isotonic-weighted autocovariance) long-run variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::chi2_sf;

pub const DEFAULT_MAX_LAG: usize = 4;

/// Least-squares nonincreasing fit with equal weights (pool adjacent
/// violators).
pub fn pava_nonincreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// Variance of the sample mean implied by `residuals`.
///
/// Autocovariances up to `max_lag` are weighted by the nonincreasing
/// projection of `|gamma_k| / gamma_0` (clipped to `[0, 1]`), summed into a
/// long-run variance and divided by `n`. A nonpositive long-run variance
/// falls back to `gamma_0`.
pub fn weave_covariance(residuals: &[f64], max_lag: usize) -> Result<f64> {
    let n = residuals.len();
    if n == 0 {
        return Err(Error::Domain("no residuals".into()));
    }
    let nf = n as f64;
    let gamma = |k: usize| (k..n).map(|t| residuals[t] * residuals[t - k]).sum::<f64>() / nf;
    let g0 = gamma(0);
    if !(g0 > 0.0) {
        return Err(Error::Degenerate("residual variance is zero".into()));
    }
    let lags = max_lag.min(n - 1);
    let g: Vec<f64> = (0..=lags).map(gamma).collect();
    let ratios: Vec<f64> = g.iter().map(|v| (v.abs() / g0).clamp(0.0, 1.0)).collect();
    let w = pava_nonincreasing(&ratios);
    let lrv = g0 + 2.0 * (1..=lags).map(|k| w[k].clamp(0.0, 1.0) * g[k]).sum::<f64>();
    Ok(if lrv > 0.0 { lrv } else { g0 } / nf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwReport {
    pub n: usize,
    /// Mean loss differential (model minus benchmark).
    pub intercept: f64,
    pub intercept_se: f64,
    pub intercept_p: f64,
    pub wald: f64,
    pub wald_p: f64,
    /// Set when the differential has zero variance (identical forecasts).
    pub degenerate: bool,
}

impl GwReport {
    /// Model significantly better than benchmark at `level`.
    pub fn model_wins(&self, level: f64) -> bool {
        self.intercept < 0.0 && self.wald_p < level
    }
}

pub fn giacomini_white(loss_model: &[f64], loss_benchmark: &[f64], max_lag: usize) -> Result<GwReport> {
    if loss_model.len() != loss_benchmark.len() {
        return Err(Error::Alignment("loss series differ in length".into()));
    }
    let n = loss_model.len();
    if n < 8 {
        return Err(Error::Domain(format!("Giacomini-White needs at least 8 observations, got {n}")));
    }
    let d: Vec<f64> = loss_model.iter().zip(loss_benchmark).map(|(a, b)| a - b).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("loss differential is not finite".into()));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let resid: Vec<f64> = d.iter().map(|v| v - mean).collect();
    if d.iter().all(|v| *v == d[0]) {
        let tie = mean == 0.0;
        return Ok(GwReport {
            n,
            intercept: mean,
            intercept_se: 0.0,
            intercept_p: if tie { 1.0 } else { 0.0 },
            wald: if tie { 0.0 } else { f64::INFINITY },
            wald_p: if tie { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let var = weave_covariance(&resid, max_lag)?;
    let wald = mean * mean / var;
    let p = chi2_sf(wald, 1.0).clamp(0.0, 1.0);
    Ok(GwReport { n, intercept: mean, intercept_se: var.sqrt(), intercept_p: p, wald, wald_p: p, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::map_range;
    use crate::synthetic::{ar1, normal_draws};
    use proptest::prelude::*;

    #[test]
    fn pava_examples() {
        assert_eq!(pava_nonincreasing(&[1.0, 0.5, 0.7, 0.2]), vec![1.0, 0.6, 0.6, 0.2]);
        assert_eq!(pava_nonincreasing(&[0.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(pava_nonincreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn pava_is_monotone_and_mean_preserving(y in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let f = pava_nonincreasing(&y);
            prop_assert!(f.windows(2).all(|w| w[0] >= w[1] - 1e-15));
            prop_assert!((f.iter().sum::<f64>() - y.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn weave_lag_zero_is_sample_variance_over_n() {
        let e = normal_draws(1, 50);
        let m = e.iter().sum::<f64>() / 50.0;
        let r: Vec<f64> = e.iter().map(|v| v - m).collect();
        let g0 = r.iter().map(|v| v * v).sum::<f64>() / 50.0;
        assert_eq!(weave_covariance(&r, 0).unwrap(), g0 / 50.0);
        assert!(matches!(weave_covariance(&[0.0; 5], 4), Err(Error::Degenerate(_))));
    }

    #[test]
    fn weave_iid_close_to_variance() {
        let errs: Vec<f64> = (0..50u64)
            .map(|s| {
                let e = normal_draws(100 + s, 500);
                let g0 = e.iter().map(|v| v * v).sum::<f64>() / 500.0;
                (weave_covariance(&e, 4).unwrap() * 500.0 / g0 - 1.0).abs()
            })
            .collect();
        assert!(errs.iter().all(|r| *r < 0.10), "{errs:?}");
    }

    #[test]
    fn weave_positive_autocorrelation_inflates() {
        for s in 0..20 {
            let x = ar1(s, 400, 0.6);
            let m = x.iter().sum::<f64>() / 400.0;
            let r: Vec<f64> = x.iter().map(|v| v - m).collect();
            let g0 = r.iter().map(|v| v * v).sum::<f64>() / 400.0;
            let lrv = weave_covariance(&r, 4).unwrap() * 400.0;
            // The true long-run variance is (1 + phi) / (1 - phi) = 4 times gamma_0.
            assert!(lrv > 1.5 * g0 && lrv < 4.0 * g0 * 1.2, "{}", lrv / g0);
        }
    }

    #[test]
    fn identical_forecasts_are_flagged() {
        let l = vec![1.5; 26];
        let r = giacomini_white(&l, &l, 4).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.intercept, r.wald_p), (0.0, 1.0));
        assert!(giacomini_white(&l[..5], &l[..5], 4).is_err());
    }

    #[test]
    fn strong_improvement_is_detected() {
        let rejections = (0..200u64)
            .filter(|&s| {
                let d: Vec<f64> = normal_draws(s, 26).iter().map(|e| -1.0 + 0.1 * e).collect();
                let r = giacomini_white(&d, &vec![0.0; 26], 4).unwrap();
                r.model_wins(0.05)
            })
            .count();
        assert_eq!(rejections, 200);
    }

    #[test]
    fn null_rejection_rate_is_calibrated() {
        let hits = map_range(1000, |s| {
            let e = normal_draws(10_000 + s as u64, 52);
            let lm: Vec<f64> = e[..26].iter().map(|v| v * v).collect();
            let lb: Vec<f64> = e[26..].iter().map(|v| v * v).collect();
            giacomini_white(&lm, &lb, 4).unwrap().wald_p < 0.05
        });
        let rate = hits.iter().filter(|h| **h).count() as f64 / 1000.0;
        assert!((0.02..=0.09).contains(&rate), "{rate}");
    }
}
