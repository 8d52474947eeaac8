//! Bagged regression forest with mean-decrease-in-impurity importance.

use rand::Rng;

use super::tree::{build_cart, CartParams, Criterion, RegressionTree};
use super::{Dataset, FitControl, Fitted, Learner};
use crate::error::Result;
use crate::par::{self, stream_rng};

#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features tried per split.
    pub max_features: f64,
    pub criterion: Criterion,
}

#[derive(Debug, Clone)]
pub struct ForestFit {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
}

impl ForestFit {
    pub fn predict_with(&self, x: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// One tree per i.i.d. bootstrap resample of `rows`; tree `b` draws from
/// its own RNG stream so the result does not depend on scheduling.
pub fn rf_fit(data: &Dataset, rows: &[usize], params: &ForestParams, seed: u64) -> Result<ForestFit> {
    let y: Vec<f64> = data.y.iter().copied().collect();
    data.targets(rows)?;
    let p = data.n_features();
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: ((params.max_features * p as f64).ceil() as usize).clamp(1, p.max(1)),
        criterion: params.criterion,
    };
    let b = params.n_estimators.max(1);
    let trees = par::map_range(b, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let sample: Vec<usize> = (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect();
        build_cart(&data.x, &y, &sample, &cart, &mut rng)
    });
    Ok(ForestFit { trees, n_features: p })
}

/// Average over trees of each feature's summed weighted impurity decrease.
pub fn mdi_importance(fit: &ForestFit) -> Vec<f64> {
    let mut out = vec![0.0; fit.n_features];
    for t in &fit.trees {
        for (o, v) in out.iter_mut().zip(t.score_by_feature(fit.n_features)) {
            *o += v;
        }
    }
    let b = fit.trees.len() as f64;
    out.iter_mut().for_each(|v| *v /= b);
    out
}

impl Learner for ForestParams {
    fn fit(&self, data: &Dataset, rows: &[usize], ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(rf_fit(data, rows, self, ctl.seed)?))
    }
}

impl Fitted for ForestFit {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        Ok(self.predict_with(|j| data.x[(row, j)]))
    }

    fn importance(&self, _data: &Dataset, _eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        Ok(Some(mdi_importance(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;
    use crate::linalg;
    use crate::synthetic::{normal_draws, uniform_draws};
    use nalgebra::{DMatrix, DVector};

    fn dataset(x: DMatrix<f64>, y: Vec<f64>) -> Dataset {
        let p = x.ncols();
        Dataset::new(x, DVector::from_vec(y), (0..p).map(|j| format!("f{j}")).collect(), vec![ColumnKind::Continuous; p])
            .unwrap()
    }

    fn params(b: usize) -> ForestParams {
        ForestParams { n_estimators: b, max_depth: 6, min_samples_leaf: 1, max_features: 1.0, criterion: Criterion::SquaredError }
    }

    #[test]
    fn single_stump_mdi_on_one_feature() {
        let x = DMatrix::from_fn(20, 3, |i, j| if j == 1 { i as f64 } else { 0.0 });
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 4.0 }).collect();
        let data = dataset(x, y);
        let rows: Vec<usize> = (0..20).collect();
        let fit = rf_fit(&data, &rows, &ForestParams { max_depth: 1, ..params(1) }, 42).unwrap();
        let mdi = mdi_importance(&fit);
        assert!(mdi[1] > 0.0 && mdi[0] == 0.0 && mdi[2] == 0.0);
    }

    #[test]
    fn constant_target_gives_zero_mdi() {
        let e = normal_draws(1, 60);
        let data = dataset(DMatrix::from_fn(30, 2, |i, j| e[2 * i + j]), vec![1.5; 30]);
        let rows: Vec<usize> = (0..30).collect();
        let fit = rf_fit(&data, &rows, &params(10), 42).unwrap();
        assert!(mdi_importance(&fit).iter().all(|&v| v == 0.0));
        assert_eq!(fit.predict(&data, 0).unwrap(), 1.5);
    }

    #[test]
    fn prediction_is_mean_of_trees_and_mdi_bookkeeping() {
        let e = normal_draws(2, 200);
        let x = DMatrix::from_fn(50, 4, |i, j| e[4 * i + j]);
        let y: Vec<f64> = (0..50).map(|i| x[(i, 0)] * 2.0 + x[(i, 2)].abs()).collect();
        let data = dataset(x, y);
        let rows: Vec<usize> = (0..50).collect();
        let fit = rf_fit(&data, &rows, &params(15), 42).unwrap();
        let direct: f64 = fit.trees.iter().map(|t| t.predict_row(&data.x, 3)).sum::<f64>() / 15.0;
        assert_eq!(fit.predict(&data, 3).unwrap(), direct);
        let mdi = mdi_importance(&fit);
        assert!(mdi.iter().all(|&v| v >= 0.0));
        let per_tree: f64 = fit.trees.iter().map(|t| t.splits.iter().map(|s| s.score).sum::<f64>()).sum::<f64>() / 15.0;
        assert!((mdi.iter().sum::<f64>() - per_tree).abs() < 1e-10);
        let again = rf_fit(&data, &rows, &params(15), 42).unwrap();
        assert_eq!(again.trees, fit.trees);
    }

    #[test]
    fn step_function_beats_ols() {
        let u = uniform_draws(42, 120);
        let x = DMatrix::from_fn(120, 1, |i, _| u[i] * 2.0 - 1.0);
        let y: Vec<f64> = (0..120).map(|i| if x[(i, 0)] > 0.0 { 1.0 } else { -1.0 }).collect();
        let data = dataset(x.clone(), y.clone());
        let train: Vec<usize> = (0..80).collect();
        let fit = rf_fit(&data, &train, &params(25), 42).unwrap();
        let (b, _) = linalg::ols(
            &linalg::with_intercept(&x.rows(0, 80).clone_owned()),
            &DVector::from_vec(y[..80].to_vec()),
        );
        let (mut rf_mse, mut ols_mse) = (0.0, 0.0);
        for i in 80..120 {
            rf_mse += (fit.predict(&data, i).unwrap() - y[i]).powi(2) / 40.0;
            ols_mse += (b[0] + b[1] * x[(i, 0)] - y[i]).powi(2) / 40.0;
        }
        assert!(rf_mse < ols_mse, "rf {rf_mse} ols {ols_mse}");
    }
}
