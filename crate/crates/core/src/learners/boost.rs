//! Second-order gradient boosting on squared error with gain importance.

use rand::seq::index::sample;
use rand::Rng;

use super::tree::{build_boost_tree, BoostTreeParams, RegressionTree};
use super::{Dataset, FitControl, Fitted, Learner};
use crate::error::Result;
use crate::par::stream_rng;

#[derive(Debug, Clone, Copy)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample: f64,
}

#[derive(Debug, Clone)]
pub struct BoostFit {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
}

impl BoostFit {
    /// `base + sum_m eta * tree_m(x)` in training order.
    pub fn predict_with(&self, x: impl Fn(usize) -> f64 + Copy) -> f64 {
        let mut out = self.base_score;
        for t in &self.trees {
            out += self.learning_rate * t.predict(x);
        }
        out
    }
}

fn draw_subset<R: Rng + ?Sized>(rng: &mut R, items: &[usize], frac: f64) -> Vec<usize> {
    if frac >= 1.0 {
        return items.to_vec();
    }
    let k = ((frac * items.len() as f64).ceil() as usize).clamp(1, items.len());
    let mut idx: Vec<usize> = sample(rng, items.len(), k).into_iter().map(|i| items[i]).collect();
    idx.sort_unstable();
    idx
}

/// Squared-error boosting: `g = yhat - y`, `h = 1`, base score `mean(y)`.
pub fn xgb_fit(data: &Dataset, rows: &[usize], params: &BoostParams, seed: u64) -> Result<BoostFit> {
    let y = data.targets(rows)?;
    let base_score = y.mean();
    let n = data.n_rows();
    let p = data.n_features();
    let cols_all: Vec<usize> = (0..p).collect();
    let tp = BoostTreeParams {
        max_depth: params.max_depth,
        lambda: params.lambda,
        gamma: params.gamma,
        min_child_weight: params.min_child_weight,
    };
    let mut rng = stream_rng(seed, 0);
    let mut pred = vec![base_score; n];
    let mut g = vec![0.0; n];
    let h = vec![1.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        for &r in rows {
            g[r] = pred[r] - data.y[r];
        }
        let sub = draw_subset(&mut rng, rows, params.subsample);
        let cols = draw_subset(&mut rng, &cols_all, params.colsample);
        let tree = build_boost_tree(&data.x, &g, &h, &sub, &cols, &tp);
        for &r in rows {
            pred[r] += params.learning_rate * tree.predict_row(&data.x, r);
        }
        trees.push(tree);
    }
    Ok(BoostFit { base_score, learning_rate: params.learning_rate, trees, n_features: p })
}

/// Average over trees of each feature's summed split gain.
pub fn gain_importance(fit: &BoostFit) -> Vec<f64> {
    let mut out = vec![0.0; fit.n_features];
    if fit.trees.is_empty() {
        return out;
    }
    for t in &fit.trees {
        for (o, v) in out.iter_mut().zip(t.score_by_feature(fit.n_features)) {
            *o += v;
        }
    }
    let m = fit.trees.len() as f64;
    out.iter_mut().for_each(|v| *v /= m);
    out
}

impl Learner for BoostParams {
    fn fit(&self, data: &Dataset, rows: &[usize], ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(xgb_fit(data, rows, self, ctl.seed)?))
    }
}

impl Fitted for BoostFit {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        Ok(self.predict_with(|j| data.x[(row, j)]))
    }

    fn importance(&self, _data: &Dataset, _eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        Ok(Some(gain_importance(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;
    use crate::synthetic::normal_draws;
    use nalgebra::{DMatrix, DVector};

    fn dataset(seed: u64, n: usize) -> Dataset {
        let e = normal_draws(seed, n * 3);
        let x = DMatrix::from_fn(n, 3, |i, j| e[3 * i + j]);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)].signum() * 2.0 + x[(i, 1)] * x[(i, 2)]);
        Dataset::new(x, y, vec!["a".into(), "b".into(), "c".into()], vec![ColumnKind::Continuous; 3]).unwrap()
    }

    fn params() -> BoostParams {
        BoostParams {
            n_rounds: 30,
            learning_rate: 0.2,
            max_depth: 3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample: 1.0,
        }
    }

    #[test]
    fn zero_learning_rate_is_constant() {
        let data = dataset(1, 40);
        let rows: Vec<usize> = (0..40).collect();
        let fit = xgb_fit(&data, &rows, &BoostParams { learning_rate: 0.0, ..params() }, 3).unwrap();
        let mean = data.y.mean();
        for r in 0..40 {
            assert!((fit.predict(&data, r).unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn one_stump_on_sign_function() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { i as f64 - 9.5 } else { ((i * 7) % 5) as f64 });
        let y = DVector::from_fn(20, |i, _| x[(i, 0)].signum());
        let data = Dataset::new(x, y, vec!["x".into(), "z".into()], vec![ColumnKind::Continuous; 2]).unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let fit = xgb_fit(&data, &rows, &BoostParams { n_rounds: 1, max_depth: 1, ..params() }, 0).unwrap();
        let gbi = gain_importance(&fit);
        assert!(gbi[0] > 0.0 && gbi[1] == 0.0);
        assert_eq!(fit.trees[0].splits.len(), 1);
    }

    #[test]
    fn train_mse_nonincreasing_in_rounds() {
        let data = dataset(2, 60);
        let rows: Vec<usize> = (0..60).collect();
        let mut last = f64::INFINITY;
        for m in [0, 1, 2, 5, 10, 20, 40] {
            let fit = xgb_fit(&data, &rows, &BoostParams { n_rounds: m, ..params() }, 9).unwrap();
            let mse: f64 = rows.iter().map(|&r| (fit.predict(&data, r).unwrap() - data.y[r]).powi(2)).sum::<f64>() / 60.0;
            assert!(mse <= last + 1e-12);
            last = mse;
        }
    }

    #[test]
    fn bit_reproducible_without_subsampling() {
        let data = dataset(3, 50);
        let rows: Vec<usize> = (0..50).collect();
        let a = xgb_fit(&data, &rows, &params(), 42).unwrap();
        let b = xgb_fit(&data, &rows, &params(), 42).unwrap();
        assert_eq!(a.trees, b.trees);
        let sub = BoostParams { subsample: 0.7, colsample: 0.6, ..params() };
        let c = xgb_fit(&data, &rows, &sub, 42).unwrap();
        let d = xgb_fit(&data, &rows, &sub, 42).unwrap();
        assert_eq!(c.trees, d.trees);
    }

    #[test]
    fn huge_gamma_gives_single_leaf_trees() {
        let data = dataset(4, 30);
        let rows: Vec<usize> = (0..30).collect();
        let fit = xgb_fit(&data, &rows, &BoostParams { gamma: 1e9, ..params() }, 0).unwrap();
        assert!(fit.trees.iter().all(|t| t.n_leaves() == 1));
        assert!(gain_importance(&fit).iter().all(|&v| v == 0.0));
    }
}
