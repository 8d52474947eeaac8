//! Regression trees: impurity-based CART for forests and second-order
//! (gradient/hessian) trees for boosting.
//!
//! Split search is exhaustive over midpoints of sorted distinct values.
//! A candidate replaces the incumbent only on strictly larger score, and
//! features are visited in ascending index order with thresholds ascending,
//! so ties resolve to the lowest feature and then the lowest threshold.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    SquaredError,
    AbsoluteError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A split and the score it earned (weighted impurity decrease or gain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub feature: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub splits: Vec<SplitRecord>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree { nodes: vec![Node::Leaf { value }], splits: vec![] }
    }

    pub fn predict(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.predict(|j| x[(row, j)])
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Per-feature sum of split scores.
    pub fn score_by_feature(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for s in &self.splits {
            out[s.feature] += s.score;
        }
        out
    }
}

fn sse(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let s: f64 = values.iter().sum();
    values.iter().map(|v| v * v).sum::<f64>() - s * s / n
}

fn median_sorted(s: &[f64]) -> f64 {
    let k = s.len();
    0.5 * (s[(k - 1) / 2] + s[k / 2])
}

fn mae_sorted(s: &[f64]) -> f64 {
    let m = median_sorted(s);
    s.iter().map(|v| (v - m).abs()).sum::<f64>() / s.len() as f64
}

/// Node impurity: variance, or mean absolute deviation from the median.
pub fn impurity(values: &[f64], criterion: Criterion) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    match criterion {
        Criterion::SquaredError => sse(values) / values.len() as f64,
        Criterion::AbsoluteError => {
            let mut s = values.to_vec();
            s.sort_by(f64::total_cmp);
            mae_sorted(&s)
        }
    }
}

/// `I(parent) - (n_L/n I(left) + n_R/n I(right))`.
pub fn impurity_decrease(left: &[f64], right: &[f64], criterion: Criterion) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::Shape("split leaves an empty child".into()));
    }
    let parent: Vec<f64> = left.iter().chain(right).copied().collect();
    let n = parent.len() as f64;
    Ok(impurity(&parent, criterion)
        - (left.len() as f64 / n * impurity(left, criterion) + right.len() as f64 / n * impurity(right, criterion)))
}

#[derive(Debug, Clone, Copy)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split.
    pub max_features: usize,
    pub criterion: Criterion,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn sorted_by_feature(x: &DMatrix<f64>, rows: &[usize], f: usize) -> Vec<usize> {
    let mut idx = rows.to_vec();
    idx.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
    idx
}

/// Impurity of every prefix / suffix of `ys` under the absolute-error criterion.
fn mae_profile(ys: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = Vec::with_capacity(ys.len());
    ys.iter()
        .map(|&v| {
            let pos = sorted.partition_point(|&s| s < v);
            sorted.insert(pos, v);
            mae_sorted(&sorted)
        })
        .collect()
}

/// Grows a CART tree on `rows` of `(x, y)`. `rows` may contain duplicates.
pub fn build_cart<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    params: &CartParams,
    rng: &mut R,
) -> RegressionTree {
    let n_root = rows.len() as f64;
    let p = x.ncols();
    let mut tree = RegressionTree { nodes: Vec::new(), splits: Vec::new() };
    let min_leaf = params.min_samples_leaf.max(1);
    let m_try = params.max_features.clamp(1, p.max(1));

    // (node slot, rows, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
    tree.nodes.push(Node::Leaf { value: 0.0 });
    while let Some((slot, node_rows, depth)) = stack.pop() {
        let ys: Vec<f64> = node_rows.iter().map(|&r| y[r]).collect();
        let leaf_value = match params.criterion {
            Criterion::SquaredError => ys.iter().sum::<f64>() / ys.len() as f64,
            Criterion::AbsoluteError => {
                let mut s = ys.clone();
                s.sort_by(f64::total_cmp);
                median_sorted(&s)
            }
        };
        tree.nodes[slot] = Node::Leaf { value: leaf_value };
        let parent_imp = impurity(&ys, params.criterion);
        if depth >= params.max_depth || node_rows.len() < 2 * min_leaf || parent_imp <= 1e-14 || p == 0 {
            continue;
        }
        let mut feats: Vec<usize> = sample(rng, p, m_try).into_iter().collect();
        feats.sort_unstable();
        let n = node_rows.len();
        let mut best: Option<Candidate> = None;
        for &f in &feats {
            let order = sorted_by_feature(x, &node_rows, f);
            let ys: Vec<f64> = order.iter().map(|&r| y[r]).collect();
            let child_imp: Box<dyn Fn(usize) -> (f64, f64)> = match params.criterion {
                Criterion::SquaredError => {
                    let mut ps = vec![0.0; n + 1];
                    let mut ps2 = vec![0.0; n + 1];
                    for i in 0..n {
                        ps[i + 1] = ps[i] + ys[i];
                        ps2[i + 1] = ps2[i] + ys[i] * ys[i];
                    }
                    Box::new(move |k: usize| {
                        let (nl, nr) = (k as f64, (n - k) as f64);
                        let l = ps2[k] - ps[k] * ps[k] / nl;
                        let (sr, sr2) = (ps[n] - ps[k], ps2[n] - ps2[k]);
                        let r = sr2 - sr * sr / nr;
                        (l.max(0.0) / nl, r.max(0.0) / nr)
                    })
                }
                Criterion::AbsoluteError => {
                    let left = mae_profile(&ys);
                    let rev: Vec<f64> = ys.iter().rev().copied().collect();
                    let right = mae_profile(&rev);
                    Box::new(move |k: usize| (left[k - 1], right[n - k - 1]))
                }
            };
            for k in min_leaf..=(n - min_leaf) {
                let (a, b) = (x[(order[k - 1], f)], x[(order[k], f)]);
                if a >= b {
                    continue;
                }
                let (il, ir) = child_imp(k);
                let dec = parent_imp - (k as f64 * il + (n - k) as f64 * ir) / n as f64;
                if best.as_ref().is_none_or(|c| dec > c.score) {
                    best = Some(Candidate { feature: f, threshold: 0.5 * (a + b), score: dec });
                }
            }
        }
        let Some(c) = best.filter(|c| c.score > 1e-14) else { continue };
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            node_rows.iter().partition(|&&r| x[(r, c.feature)] <= c.threshold);
        let left = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes[slot] = Node::Split { feature: c.feature, threshold: c.threshold, left, right: left + 1 };
        tree.splits.push(SplitRecord { feature: c.feature, score: n as f64 / n_root * c.score });
        stack.push((left + 1, r_rows, depth + 1));
        stack.push((left, l_rows, depth + 1));
    }
    tree
}

/// `Score(parent) - Score(L) - Score(R) - gamma` with `Score = -G^2/(H + lambda)`.
pub fn xgb_split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| {
        let d = h + lambda;
        if d > 0.0 {
            -g * g / d
        } else {
            0.0
        }
    };
    score(g_l + g_r, h_l + h_r) - score(g_l, h_l) - score(g_r, h_r) - gamma
}

#[derive(Debug, Clone, Copy)]
pub struct BoostTreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

/// Second-order tree on gradients `g` and hessians `h` (indexed by dataset
/// row). Leaves hold the unshrunk weight `-G/(H + lambda)`.
pub fn build_boost_tree(
    x: &DMatrix<f64>,
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    cols: &[usize],
    params: &BoostTreeParams,
) -> RegressionTree {
    let mut tree = RegressionTree { nodes: vec![Node::Leaf { value: 0.0 }], splits: vec![] };
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows.to_vec(), 0)];
    while let Some((slot, node_rows, depth)) = stack.pop() {
        let gs: f64 = node_rows.iter().map(|&r| g[r]).sum();
        let hs: f64 = node_rows.iter().map(|&r| h[r]).sum();
        let denom = hs + params.lambda;
        tree.nodes[slot] = Node::Leaf { value: if denom > 0.0 { -gs / denom } else { 0.0 } };
        if depth >= params.max_depth || node_rows.len() < 2 {
            continue;
        }
        let mut best: Option<Candidate> = None;
        for &f in cols {
            let order = sorted_by_feature(x, &node_rows, f);
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 1..order.len() {
                gl += g[order[k - 1]];
                hl += h[order[k - 1]];
                let (a, b) = (x[(order[k - 1], f)], x[(order[k], f)]);
                if a >= b {
                    continue;
                }
                let hr = hs - hl;
                if hl < params.min_child_weight || hr < params.min_child_weight {
                    continue;
                }
                let gain = xgb_split_gain(gl, hl, gs - gl, hr, params.lambda, params.gamma);
                if best.as_ref().is_none_or(|c| gain > c.score) {
                    best = Some(Candidate { feature: f, threshold: 0.5 * (a + b), score: gain });
                }
            }
        }
        let Some(c) = best.filter(|c| c.score > 0.0) else { continue };
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            node_rows.iter().partition(|&&r| x[(r, c.feature)] <= c.threshold);
        let left = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes[slot] = Node::Split { feature: c.feature, threshold: c.threshold, left, right: left + 1 };
        tree.splits.push(SplitRecord { feature: c.feature, score: c.score });
        stack.push((left + 1, r_rows, depth + 1));
        stack.push((left, l_rows, depth + 1));
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::stream_rng;

    #[test]
    fn decrease_examples() {
        let d = impurity_decrease(&[0.0, 0.0], &[10.0, 10.0], Criterion::SquaredError).unwrap();
        assert!((d - 25.0).abs() < 1e-12);
        for c in [Criterion::SquaredError, Criterion::AbsoluteError] {
            assert_eq!(impurity_decrease(&[3.0, 3.0], &[3.0], c).unwrap(), 0.0);
        }
        assert!(impurity_decrease(&[], &[1.0], Criterion::SquaredError).is_err());
        // mean |y - median| of [0, 0, 10, 10] is 5; children are pure.
        let d = impurity_decrease(&[0.0, 0.0], &[10.0, 10.0], Criterion::AbsoluteError).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn gain_examples() {
        assert!((xgb_split_gain(-4.0, 2.0, 4.0, 2.0, 0.0, 0.0) - 16.0).abs() < 1e-12);
        // Identical children without L2 gain nothing but still pay gamma.
        assert!((xgb_split_gain(1.5, 2.0, 1.5, 2.0, 0.0, 0.3) - (-0.3)).abs() < 1e-12);
        // With L2 the merged parent is penalized less than the two halves.
        let s = |g: f64, h: f64| -g * g / (h + 1.0);
        let expect = s(3.0, 4.0) - 2.0 * s(1.5, 2.0) - 0.3;
        assert!((xgb_split_gain(1.5, 2.0, 1.5, 2.0, 1.0, 0.3) - expect).abs() < 1e-12);
    }

    #[test]
    fn cart_splits_strictly_partition() {
        let x = DMatrix::from_fn(40, 2, |i, j| ((i * (j + 3)) % 17) as f64);
        let y: Vec<f64> = (0..40).map(|i| (i % 5) as f64).collect();
        let rows: Vec<usize> = (0..40).collect();
        let params = CartParams { max_depth: 6, min_samples_leaf: 2, max_features: 2, criterion: Criterion::SquaredError };
        let tree = build_cart(&x, &y, &rows, &params, &mut stream_rng(1, 0));
        fn check(tree: &RegressionTree, i: usize, rows: Vec<usize>, x: &DMatrix<f64>) {
            if let Node::Split { feature, threshold, left, right } = tree.nodes[i] {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&k| x[(k, feature)] <= threshold);
                assert!(!l.is_empty() && !r.is_empty());
                assert!(l.len() >= 2 && r.len() >= 2);
                check(tree, left, l, x);
                check(tree, right, r, x);
            }
        }
        check(&tree, 0, rows, &x);
        assert!(tree.nodes.iter().all(|n| match n {
            Node::Leaf { value } => value.is_finite(),
            _ => true,
        }));
    }

    #[test]
    fn absolute_error_profile_matches_direct() {
        let ys = [3.0, -1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let prof = mae_profile(&ys);
        for k in 1..=ys.len() {
            assert!((prof[k - 1] - impurity(&ys[..k], Criterion::AbsoluteError)).abs() < 1e-12);
        }
    }

    #[test]
    fn boost_tree_refuses_when_gamma_large() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let g: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 1.0 }).collect();
        let h = vec![1.0; 10];
        let rows: Vec<usize> = (0..10).collect();
        let params = BoostTreeParams { max_depth: 3, lambda: 1.0, gamma: 1e6, min_child_weight: 1.0 };
        let t = build_boost_tree(&x, &g, &h, &rows, &[0], &params);
        assert_eq!(t.nodes.len(), 1);
        let params = BoostTreeParams { gamma: 0.0, ..params };
        let t = build_boost_tree(&x, &g, &h, &rows, &[0], &params);
        assert_eq!(t.splits[0].feature, 0);
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 4.5),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn ties_go_to_lowest_feature() {
        let x = DMatrix::from_fn(8, 3, |i, _| i as f64);
        let y: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let rows: Vec<usize> = (0..8).collect();
        let params = CartParams { max_depth: 1, min_samples_leaf: 1, max_features: 3, criterion: Criterion::SquaredError };
        let t = build_cart(&x, &y, &rows, &params, &mut stream_rng(0, 0));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }
}
