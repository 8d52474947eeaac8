//! Ridge, Lasso and Elastic Net on centered data with an unpenalized intercept.
//!
//! Objective: `(1/2n) |y - b0 - X b|^2 + alpha * ((1 - mix) |b|^2 + mix |b|_1)`.
//! `mix = 1` is the Lasso with `lambda = alpha`; `mix = 0` is Ridge.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, FitControl, Fitted, Learner};
use crate::error::{Error, Result};
use crate::linalg;

pub const CD_TOL: f64 = 1e-6;
pub const CD_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedFit {
    pub intercept: f64,
    pub coef: DVector<f64>,
    pub alpha: f64,
    pub mix: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl PenalizedFit {
    pub fn predict_row(&self, x: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept + x.into_iter().zip(self.coef.iter()).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn check_penalty(alpha: f64, mix: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("penalty must be finite and nonnegative, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::Domain(format!("mixing weight must lie in [0, 1], got {mix}")));
    }
    Ok(())
}

fn centered(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>, f64)> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!("x has {} rows, y has {}", x.nrows(), y.len())));
    }
    let xm = linalg::column_means(x);
    let ym = y.mean();
    Ok((linalg::center(x, &xm), y.add_scalar(-ym), xm, ym))
}

/// Closed-form ridge: `(Xc'Xc/n + 2 alpha I) b = Xc'yc/n`.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<PenalizedFit> {
    check_penalty(alpha, 0.0)?;
    let (xc, yc, xm, ym) = centered(x, y)?;
    let n = x.nrows() as f64;
    let p = x.ncols();
    let a = xc.transpose() * &xc / n + DMatrix::identity(p, p) * (2.0 * alpha);
    let b = xc.transpose() * &yc / n;
    let (coef, _) = linalg::solve_spd(&a, &b);
    let intercept = ym - xm.dot(&coef);
    Ok(PenalizedFit { intercept, coef, alpha, mix: 0.0, sweeps: 0, converged: true })
}

pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<PenalizedFit> {
    enet_fit(x, y, lambda, 1.0)
}

pub fn enet_fit(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, mix: f64) -> Result<PenalizedFit> {
    enet_fit_traced(x, y, alpha, mix, None)
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Penalized objective at `(intercept, coef)` on the raw data.
pub fn enet_objective(x: &DMatrix<f64>, y: &DVector<f64>, fit: &PenalizedFit) -> f64 {
    let r = y - x * &fit.coef;
    let rss = r.iter().map(|v| (v - fit.intercept).powi(2)).sum::<f64>();
    let l2 = fit.coef.norm_squared();
    let l1 = fit.coef.iter().map(|b| b.abs()).sum::<f64>();
    rss / (2.0 * x.nrows() as f64) + fit.alpha * ((1.0 - fit.mix) * l2 + fit.mix * l1)
}

/// Cyclic coordinate descent. When `trace` is given, the objective after
/// every full sweep is appended to it.
pub fn enet_fit_traced(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    mix: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<PenalizedFit> {
    check_penalty(alpha, mix)?;
    let (xc, yc, xm, ym) = centered(x, y)?;
    let n = x.nrows() as f64;
    let p = x.ncols();
    let z: Vec<f64> = xc.column_iter().map(|c| c.norm_squared() / n).collect();
    let l1 = alpha * mix;
    let l2 = 2.0 * alpha * (1.0 - mix);

    let mut beta = DVector::zeros(p);
    let mut resid = yc.clone();
    let mut converged = p == 0;
    let mut sweeps = 0;
    while !converged && sweeps < CD_MAX_ITER {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let denom = z[j] + l2;
            let old = beta[j];
            let new = if denom > 0.0 {
                let rho = xc.column(j).dot(&resid) / n + z[j] * old;
                soft_threshold(rho, l1) / denom
            } else {
                0.0
            };
            if new != old {
                resid.axpy(old - new, &xc.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            let rss = resid.norm_squared() / (2.0 * n);
            let pen = alpha * ((1.0 - mix) * beta.norm_squared() + mix * beta.iter().map(|b| b.abs()).sum::<f64>());
            t.push(rss + pen);
        }
        converged = max_delta < CD_TOL;
    }
    if !converged {
        warn!("coordinate descent did not converge in {CD_MAX_ITER} sweeps (alpha {alpha}, mix {mix})");
    }
    let intercept = ym - xm.dot(&beta);
    Ok(PenalizedFit { intercept, coef: beta, alpha, mix, sweeps, converged })
}

/// Signed coefficients of the non-dummy features as `(name, value)` pairs.
pub fn cbfi_importance(fit: &PenalizedFit, data: &Dataset) -> Vec<(String, f64)> {
    (0..data.n_features())
        .filter(|&j| !data.is_dummy(j))
        .map(|j| (data.features[j].clone(), fit.coef[j]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Ridge,
    ElasticNet { mix: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct PenalizedLearner {
    pub alpha: f64,
    pub penalty: Penalty,
}

impl PenalizedLearner {
    pub fn ridge(alpha: f64) -> Self {
        PenalizedLearner { alpha, penalty: Penalty::Ridge }
    }

    pub fn lasso(alpha: f64) -> Self {
        PenalizedLearner { alpha, penalty: Penalty::ElasticNet { mix: 1.0 } }
    }

    pub fn enet(alpha: f64, mix: f64) -> Self {
        PenalizedLearner { alpha, penalty: Penalty::ElasticNet { mix } }
    }
}

/// Any fitted linear model: intercept plus one coefficient per feature.
pub(crate) struct LinearFit {
    pub intercept: f64,
    pub coef: DVector<f64>,
}

impl Fitted for LinearFit {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        Ok(self.intercept + data.x.row(row).transpose().dot(&self.coef))
    }

    fn importance(&self, _data: &Dataset, _eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.coef.iter().copied().collect()))
    }
}

impl Learner for PenalizedLearner {
    fn fit(&self, data: &Dataset, rows: &[usize], _ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        let all: Vec<usize> = (0..data.n_features()).collect();
        let x = data.design(rows, &all);
        let y = data.targets(rows)?;
        let fit = match self.penalty {
            Penalty::Ridge => ridge_fit(&x, &y, self.alpha)?,
            Penalty::ElasticNet { mix } => enet_fit(&x, &y, self.alpha, mix)?,
        };
        Ok(Box::new(LinearFit { intercept: fit.intercept, coef: fit.coef }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;
    use crate::synthetic::normal_draws;
    use proptest::prelude::*;

    fn problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let e = normal_draws(seed, n * (p + 1));
        let x = DMatrix::from_fn(n, p, |i, j| e[i * p + j]);
        let beta: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.5 - 0.4 * j as f64 } else { 0.0 }).collect();
        let y = DVector::from_fn(n, |i, _| {
            0.7 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + 0.3 * e[n * p + i]
        });
        (x, y)
    }

    fn standardized_column(n: usize, slope: f64) -> (DMatrix<f64>, DVector<f64>) {
        // x has mean 0 and (1/n) x'x = 1; y = slope * x exactly.
        let x = DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let y = x.column(0) * slope;
        (x, y)
    }

    #[test]
    fn ridge_zero_penalty_is_ols() {
        let (x, y) = problem(1, 40, 4);
        let fit = ridge_fit(&x, &y, 0.0).unwrap();
        let (b, _) = linalg::ols(&linalg::with_intercept(&x), &y);
        assert!((fit.intercept - b[0]).abs() < 1e-10);
        for j in 0..4 {
            assert!((fit.coef[j] - b[j + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn ridge_huge_penalty_shrinks_to_mean() {
        let (x, y) = problem(2, 30, 3);
        let fit = ridge_fit(&x, &y, 1e9).unwrap();
        assert!(fit.coef.amax() < 1e-8);
        assert!((fit.intercept - y.mean()).abs() < 1e-6);
    }

    #[test]
    fn ridge_single_predictor_shrinkage() {
        let (x, y) = standardized_column(50, 2.0);
        for alpha in [0.0, 0.1, 0.5, 3.0] {
            let fit = ridge_fit(&x, &y, alpha).unwrap();
            // Oracle: direct normal-equation solve, 2n / (n + 2 n alpha).
            let expect = 2.0 * 50.0 / (50.0 + 2.0 * 50.0 * alpha);
            assert!((fit.coef[0] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn lasso_single_predictor_soft_threshold() {
        let (x, y) = standardized_column(50, 2.0);
        let fit = lasso_fit(&x, &y, 0.5).unwrap();
        // Oracle: brute-force minimum of the 1-D objective over a fine grid.
        let obj = |b: f64| {
            let r: f64 = (0..50).map(|i| (y[i] - b * x[(i, 0)]).powi(2)).sum();
            r / 100.0 + 0.5 * b.abs()
        };
        let grid = (0..=40_000).map(|k| k as f64 * 1e-4).min_by(|a, b| obj(*a).total_cmp(&obj(*b))).unwrap();
        assert!((fit.coef[0] - 1.5).abs() < 1e-9);
        assert!((grid - 1.5).abs() < 1e-4);
    }

    #[test]
    fn large_penalty_zeroes_everything() {
        let (x, y) = problem(3, 30, 5);
        for fit in [lasso_fit(&x, &y, 1e3).unwrap(), enet_fit(&x, &y, 1e3, 0.4).unwrap()] {
            assert!(fit.coef.iter().all(|&b| b.abs() < 1e-3));
        }
        assert!(lasso_fit(&x, &y, 1e3).unwrap().coef.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn enet_endpoints() {
        let (x, y) = problem(4, 10, 5);
        let lasso = lasso_fit(&x, &y, 0.05).unwrap();
        let en1 = enet_fit(&x, &y, 0.05, 1.0).unwrap();
        assert!((lasso.coef.clone() - en1.coef).amax() < CD_TOL);
        let ridge = ridge_fit(&x, &y, 0.2).unwrap();
        let en0 = enet_fit(&x, &y, 0.2, 0.0).unwrap();
        assert!((ridge.coef - en0.coef).amax() < 1e-5);
    }

    #[test]
    fn lasso_kkt_conditions() {
        let (x, y) = problem(5, 60, 8);
        let lambda = 0.08;
        let fit = lasso_fit(&x, &y, lambda).unwrap();
        let n = 60.0;
        let r = DVector::from_fn(60, |i, _| y[i] - fit.predict_row(x.row(i).iter().copied()));
        for j in 0..8 {
            let g = x.column(j).dot(&r) / n - x.column(j).mean() * r.sum() / n;
            if fit.coef[j] == 0.0 {
                assert!(g.abs() <= lambda + 1e-6);
            } else {
                assert!((g - lambda * fit.coef[j].signum()).abs() <= 1e-5, "j={j} g={g}");
            }
        }
    }

    #[test]
    fn objective_nonincreasing_per_sweep() {
        let (x, y) = problem(6, 25, 6);
        for mix in [0.0, 0.3, 1.0] {
            let mut trace = Vec::new();
            let fit = enet_fit_traced(&x, &y, 0.03, mix, Some(&mut trace)).unwrap();
            assert!(fit.converged);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            assert!((trace.last().unwrap() - enet_objective(&x, &y, &fit)).abs() < 1e-9);
        }
    }

    #[test]
    fn enet_continuous_in_mix() {
        let (x, y) = problem(7, 40, 5);
        let a = enet_fit(&x, &y, 0.05, 0.5).unwrap();
        let b = enet_fit(&x, &y, 0.05, 0.5 + 1e-6).unwrap();
        assert!((a.coef - b.coef).amax() < 1e-4);
    }

    #[test]
    fn cbfi_excludes_dummies_and_keeps_sign() {
        let data = Dataset::new(
            DMatrix::zeros(1, 3),
            DVector::zeros(1),
            vec!["a".into(), "b".into(), "season_q1".into()],
            vec![ColumnKind::Continuous, ColumnKind::Continuous, ColumnKind::SeasonalDummy],
        )
        .unwrap();
        let fit = PenalizedFit {
            intercept: 0.0,
            coef: DVector::from_vec(vec![2.0, -3.0, 9.0]),
            alpha: 0.0,
            mix: 0.0,
            sweeps: 0,
            converged: true,
        };
        let imp = cbfi_importance(&fit, &data);
        assert_eq!(imp, vec![("a".to_string(), 2.0), ("b".to_string(), -3.0)]);
    }

    #[test]
    fn bad_penalties_rejected() {
        let (x, y) = problem(8, 10, 2);
        assert!(matches!(enet_fit(&x, &y, -1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(enet_fit(&x, &y, 1.0, 1.5), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn coefficients_finite_and_shrink_with_penalty(seed in 0u64..1000, lo in 1e-4f64..0.05) {
            let (x, y) = problem(seed, 20, 4);
            let small = enet_fit(&x, &y, lo, 0.7).unwrap();
            let big = enet_fit(&x, &y, lo * 50.0, 0.7).unwrap();
            prop_assert!(small.coef.iter().all(|b| b.is_finite()));
            let l1 = |f: &PenalizedFit| f.coef.iter().map(|b| b.abs()).sum::<f64>();
            prop_assert!(l1(&big) <= l1(&small) + 1e-6);
        }
    }
}
