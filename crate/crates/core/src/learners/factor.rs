//! PCA, principal-component regression, PLS1 with VIP, and a light DFM.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::linear::LinearFit;
use super::{Dataset, FitControl, Fitted, Learner};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaDecomposition {
    pub means: DVector<f64>,
    /// `p x k`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// Descending, nonnegative.
    pub eigenvalues: DVector<f64>,
}

impl PcaDecomposition {
    pub fn scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::center(x, &self.means) * &self.loadings
    }

    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }
}

/// Eigen-decomposition of the sample covariance of `x`, keeping `k` axes.
/// Each loading is signed so its largest-magnitude entry is positive.
pub fn pca_decompose(x: &DMatrix<f64>, k: usize) -> Result<PcaDecomposition> {
    let (n, p) = x.shape();
    if k == 0 || k > p || k + 1 > n {
        return Err(Error::Shape(format!("pca: k={k} outside 1..={} for {n}x{p} data", p.min(n.saturating_sub(1)))));
    }
    let means = linalg::column_means(x);
    let xc = linalg::center(x, &means);
    let cov = xc.transpose() * &xc / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut loadings = DMatrix::zeros(p, k);
    let mut values = DVector::zeros(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        let pivot = v.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
        if pivot < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(c, &v);
        values[c] = eig.eigenvalues[i].max(0.0);
    }
    Ok(PcaDecomposition { means, loadings, eigenvalues: values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcrFit {
    pub pca: PcaDecomposition,
    /// Ridge coefficients on the component scores.
    pub gamma: DVector<f64>,
    /// Back-projected coefficients in the original feature space.
    pub coef: DVector<f64>,
    pub intercept: f64,
}

/// Ridge of `y` on the first `k` principal-component scores, mapped back.
pub fn pcr_fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, lambda: f64) -> Result<PcrFit> {
    if x.nrows() != y.len() {
        return Err(Error::Shape("pcr: x and y disagree in length".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("pcr penalty must be nonnegative, got {lambda}")));
    }
    let pca = pca_decompose(x, k)?;
    let z = pca.scores(x);
    let n = x.nrows() as f64;
    let ym = y.mean();
    let yc = y.add_scalar(-ym);
    let a = z.transpose() * &z / n + DMatrix::identity(k, k) * (2.0 * lambda);
    let (gamma, _) = linalg::solve_spd(&a, &(z.transpose() * yc / n));
    let coef = &pca.loadings * &gamma;
    let intercept = ym - pca.means.dot(&coef);
    Ok(PcrFit { pca, gamma, coef, intercept })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsFit {
    pub x_means: DVector<f64>,
    pub y_mean: f64,
    /// `p x A` unit-norm weight vectors.
    pub weights: DMatrix<f64>,
    /// `n x A` training scores.
    pub scores: DMatrix<f64>,
    /// `p x A` X-loadings.
    pub loadings: DMatrix<f64>,
    /// Y-loadings.
    pub y_loadings: DVector<f64>,
    pub coef: DVector<f64>,
    pub intercept: f64,
}

impl PlsFit {
    pub fn components(&self) -> usize {
        self.weights.ncols()
    }
}

/// PLS1 by NIPALS with X- and y-deflation. Components stop early if the
/// deflated covariance vanishes.
pub fn pls_fit(x: &DMatrix<f64>, y: &DVector<f64>, a: usize) -> Result<PlsFit> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::Shape("pls: x and y disagree in length".into()));
    }
    if a == 0 || a > p || a + 1 > n {
        return Err(Error::Shape(format!("pls: {a} components outside 1..={}", p.min(n.saturating_sub(1)))));
    }
    let x_means = linalg::column_means(x);
    let y_mean = y.mean();
    let mut xd = linalg::center(x, &x_means);
    let mut yd = y.add_scalar(-y_mean);
    if yd.norm_squared() == 0.0 {
        return Err(Error::Degenerate("pls: target has zero variance".into()));
    }
    let (mut w_cols, mut t_cols, mut p_cols, mut c) = (vec![], vec![], vec![], vec![]);
    for _ in 0..a {
        let mut w = xd.transpose() * &yd;
        let norm = w.norm();
        if norm <= 1e-12 * (1.0 + x_means.norm()) {
            break;
        }
        w /= norm;
        let t = &xd * &w;
        let tt = t.norm_squared();
        if tt <= 0.0 {
            break;
        }
        let pl = xd.transpose() * &t / tt;
        let ca = yd.dot(&t) / tt;
        xd -= &t * pl.transpose();
        yd.axpy(-ca, &t, 1.0);
        w_cols.push(w);
        t_cols.push(t);
        p_cols.push(pl);
        c.push(ca);
    }
    if w_cols.is_empty() {
        return Err(Error::Degenerate("pls: features carry no covariance with the target".into()));
    }
    let weights = DMatrix::from_columns(&w_cols);
    let scores = DMatrix::from_columns(&t_cols);
    let loadings = DMatrix::from_columns(&p_cols);
    let y_loadings = DVector::from_vec(c);
    let ptw = loadings.transpose() * &weights;
    let inner = ptw
        .clone()
        .lu()
        .solve(&y_loadings)
        .ok_or_else(|| Error::Numeric("pls: P'W is singular".into()))?;
    let coef = &weights * inner;
    let intercept = y_mean - x_means.dot(&coef);
    Ok(PlsFit { x_means, y_mean, weights, scores, loadings, y_loadings, coef, intercept })
}

/// Variable importance in projection, one score per feature.
pub fn vip_scores(fit: &PlsFit) -> Vec<f64> {
    let p = fit.weights.nrows();
    let ssy: Vec<f64> = (0..fit.components())
        .map(|a| fit.y_loadings[a].powi(2) * fit.scores.column(a).norm_squared())
        .collect();
    let total: f64 = ssy.iter().sum();
    (0..p)
        .map(|j| {
            if total <= 0.0 {
                return 0.0;
            }
            let s: f64 = (0..fit.components())
                .map(|a| {
                    let w = fit.weights.column(a);
                    ssy[a] * (w[j] / w.norm()).powi(2)
                })
                .sum();
            (p as f64 * s / total).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfmFit {
    pub pca: PcaDecomposition,
    /// Continuous columns feeding the factors.
    pub factor_columns: Vec<usize>,
    pub dummy_columns: Vec<usize>,
    /// `[intercept, factors.., dummies..]`.
    pub regression: DVector<f64>,
    /// AR coefficients on the regression residuals (no intercept).
    pub phi: DVector<f64>,
}

impl DfmFit {
    fn regression_at(&self, data: &Dataset, row: usize) -> f64 {
        let xr = DMatrix::from_fn(1, self.factor_columns.len(), |_, j| data.x[(row, self.factor_columns[j])]);
        let f = self.pca.scores(&xr);
        let r = self.pca.k();
        let mut v = self.regression[0];
        for i in 0..r {
            v += self.regression[1 + i] * f[(0, i)];
        }
        for (i, &c) in self.dummy_columns.iter().enumerate() {
            v += self.regression[1 + r + i] * data.x[(row, c)];
        }
        v
    }

    fn residual_at(&self, data: &Dataset, row: usize) -> f64 {
        data.y[row] - self.regression_at(data, row)
    }

    /// Factor-regression prediction plus the AR forecast of its residual.
    pub fn forecast(&self, data: &Dataset, row: usize) -> Result<f64> {
        let q = self.phi.len();
        if row < q {
            return Err(Error::Shape(format!("dfm: residual AR({q}) needs {q} prior rows")));
        }
        let ar: f64 = (1..=q).map(|i| self.phi[i - 1] * self.residual_at(data, row - i)).sum();
        let out = self.regression_at(data, row) + ar;
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Numeric("dfm forecast is not finite".into()))
        }
    }
}

/// Factors by PCA on the continuous columns, OLS of the target on factors
/// and dummies, then AR(`ar_order`) on that regression's residuals.
pub fn dfm_fit(data: &Dataset, rows: &[usize], factors: usize, ar_order: usize) -> Result<DfmFit> {
    let factor_columns = data.continuous_columns();
    let dummy_columns = data.dummy_columns();
    let xf = data.design(rows, &factor_columns);
    let r = factors.clamp(1, factor_columns.len().min(rows.len().saturating_sub(1)).max(1));
    let pca = pca_decompose(&xf, r)?;
    let f = pca.scores(&xf);
    let xd = data.design(rows, &dummy_columns);
    let mut design = DMatrix::from_element(rows.len(), 1 + r + dummy_columns.len(), 1.0);
    design.columns_mut(1, r).copy_from(&f);
    design.columns_mut(1 + r, dummy_columns.len()).copy_from(&xd);
    let y = data.targets(rows)?;
    let (regression, _) = linalg::ols(&design, &y);
    let mut fit = DfmFit { pca, factor_columns, dummy_columns, regression, phi: DVector::zeros(0) };
    if ar_order > 0 {
        let usable: Vec<usize> = rows.iter().copied().filter(|&t| t >= ar_order).collect();
        if usable.len() <= ar_order {
            return Err(Error::Shape(format!("dfm: too few rows for residual AR({ar_order})")));
        }
        let e = |t: usize| fit.residual_at(data, t);
        let lagged = DMatrix::from_fn(usable.len(), ar_order, |i, j| e(usable[i] - j - 1));
        let target = DVector::from_iterator(usable.len(), usable.iter().map(|&t| e(t)));
        if lagged.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Training("dfm: residual lags unavailable".into()));
        }
        fit.phi = linalg::ols(&lagged, &target).0;
    }
    Ok(fit)
}

/// Forecast for `row` from a DFM fit on `rows`.
pub fn dfm_fit_forecast(data: &Dataset, rows: &[usize], row: usize, factors: usize, ar_order: usize) -> Result<f64> {
    dfm_fit(data, rows, factors, ar_order)?.forecast(data, row)
}

fn clamp_components(k: usize, rows: usize, cols: usize) -> usize {
    k.clamp(1, cols.min(rows.saturating_sub(1)).max(1))
}

#[derive(Debug, Clone, Copy)]
pub struct PcrLearner {
    pub components: usize,
    pub alpha: f64,
}

impl Learner for PcrLearner {
    fn fit(&self, data: &Dataset, rows: &[usize], _ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        let all: Vec<usize> = (0..data.n_features()).collect();
        let x = data.design(rows, &all);
        let y = data.targets(rows)?;
        let k = clamp_components(self.components, rows.len(), all.len());
        let fit = pcr_fit(&x, &y, k, self.alpha)?;
        Ok(Box::new(LinearFit { intercept: fit.intercept, coef: fit.coef }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlsLearner {
    pub components: usize,
}

struct PlsFitted {
    fit: PlsFit,
}

impl Learner for PlsLearner {
    fn fit(&self, data: &Dataset, rows: &[usize], _ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        let all: Vec<usize> = (0..data.n_features()).collect();
        let x = data.design(rows, &all);
        let y = data.targets(rows)?;
        let a = clamp_components(self.components, rows.len(), all.len());
        Ok(Box::new(PlsFitted { fit: pls_fit(&x, &y, a)? }))
    }
}

impl Fitted for PlsFitted {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        Ok(self.fit.intercept + data.x.row(row).transpose().dot(&self.fit.coef))
    }

    fn importance(&self, _data: &Dataset, _eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        Ok(Some(vip_scores(&self.fit)))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DfmLearner {
    pub factors: usize,
    pub ar_order: usize,
}

struct DfmFitted {
    fit: DfmFit,
}

impl Learner for DfmLearner {
    fn fit(&self, data: &Dataset, rows: &[usize], _ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(DfmFitted { fit: dfm_fit(data, rows, self.factors, self.ar_order)? }))
    }
}

impl Fitted for DfmFitted {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        self.fit.forecast(data, row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;
    use crate::synthetic::normal_draws;
    use proptest::prelude::*;

    fn gaussian(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
        let e = normal_draws(seed, n * p);
        DMatrix::from_fn(n, p, |i, j| e[i * p + j])
    }

    fn response(x: &DMatrix<f64>, seed: u64) -> DVector<f64> {
        let e = normal_draws(seed, x.nrows());
        DVector::from_fn(x.nrows(), |i, _| {
            1.0 + (0..x.ncols()).map(|j| x[(i, j)] * (j as f64 - 1.0)).sum::<f64>() + 0.2 * e[i]
        })
    }

    #[test]
    fn rank_one_data_has_single_component() {
        let x = DMatrix::from_fn(20, 2, |i, _| i as f64 * 0.5 - 3.0);
        let pca = pca_decompose(&x, 2).unwrap();
        let total: f64 = pca.eigenvalues.sum();
        assert!((pca.eigenvalues[0] / total - 1.0).abs() < 1e-12);
        let v = pca.loadings.column(0);
        assert!((v[0] - v[1]).abs() < 1e-12 && v[0] > 0.0);
    }

    #[test]
    fn loadings_orthonormal_and_sorted() {
        let x = gaussian(1, 80, 6);
        let pca = pca_decompose(&x, 4).unwrap();
        let gram = pca.loadings.transpose() * &pca.loadings;
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-8);
        for w in pca.eigenvalues.as_slice().windows(2) {
            assert!(w[0] >= w[1] && w[1] >= 0.0);
        }
    }

    #[test]
    fn eigenvalues_match_covariance_oracle() {
        let x = gaussian(2, 2000, 3);
        let pca = pca_decompose(&x, 3).unwrap();
        // Oracle: v' S v for each returned loading equals its eigenvalue and
        // S v = lambda v.
        let xc = linalg::center(&x, &linalg::column_means(&x));
        let s = xc.transpose() * &xc / 1999.0;
        for c in 0..3 {
            let v = pca.loadings.column(c);
            assert!((&s * v - v * pca.eigenvalues[c]).amax() < 1e-10);
        }
        // identity covariance: eigenvalues close to one another
        assert!(pca.eigenvalues[0] / pca.eigenvalues[2] < 1.25);
    }

    #[test]
    fn full_basis_reconstructs() {
        let x = gaussian(3, 30, 4);
        let pca = pca_decompose(&x, 4).unwrap();
        let rec = pca.scores(&x) * pca.loadings.transpose();
        let xc = linalg::center(&x, &pca.means);
        assert!((rec - xc).amax() < 1e-8);
    }

    #[test]
    fn pca_k_out_of_range() {
        let x = gaussian(4, 5, 3);
        assert!(matches!(pca_decompose(&x, 0), Err(Error::Shape(_))));
        assert!(matches!(pca_decompose(&x, 4), Err(Error::Shape(_))));
        assert!(matches!(pca_decompose(&gaussian(4, 3, 5), 3), Err(Error::Shape(_))));
    }

    #[test]
    fn pcr_full_rank_is_ols_and_shrinks() {
        let x = gaussian(5, 40, 4);
        let y = response(&x, 6);
        let fit = pcr_fit(&x, &y, 4, 0.0).unwrap();
        let (b, _) = linalg::ols(&linalg::with_intercept(&x), &y);
        assert!((fit.intercept - b[0]).abs() < 1e-9);
        assert!((fit.coef.clone() - b.rows(1, 4)).amax() < 1e-9);
        let shrunk = pcr_fit(&x, &y, 4, 1e9).unwrap();
        assert!(shrunk.coef.amax() < 1e-7);
    }

    #[test]
    fn pcr_coefficients_in_loading_span() {
        let x = gaussian(7, 50, 6);
        let y = response(&x, 8);
        let fit = pcr_fit(&x, &y, 2, 0.1).unwrap();
        let v = &fit.pca.loadings;
        let proj = v * (v.transpose() * &fit.coef);
        assert!((proj - &fit.coef).amax() < 1e-8);
    }

    #[test]
    fn pcr_rank_one_reduces_to_score_regression() {
        let t: Vec<f64> = normal_draws(9, 30);
        let x = DMatrix::from_fn(30, 3, |i, j| t[i] * [1.0, 2.0, -1.0][j]);
        let y = DVector::from_fn(30, |i, _| 0.5 + 3.0 * t[i]);
        let fit = pcr_fit(&x, &y, 1, 0.0).unwrap();
        let z = fit.pca.scores(&x);
        // Hand reduction: univariate OLS of y on the single score.
        let zc = z.column(0).clone_owned();
        let slope = zc.dot(&y.add_scalar(-y.mean())) / zc.norm_squared();
        assert!((fit.gamma[0] - slope).abs() < 1e-10);
        for i in 0..30 {
            let pred = fit.intercept + x.row(i).transpose().dot(&fit.coef);
            assert!((pred - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pls_first_weight_is_normalized_covariance() {
        let x = gaussian(10, 40, 5);
        let y = response(&x, 11);
        let fit = pls_fit(&x, &y, 3).unwrap();
        let xc = linalg::center(&x, &fit.x_means);
        let oracle = xc.transpose() * y.add_scalar(-y.mean());
        let cos = fit.weights.column(0).dot(&oracle) / oracle.norm();
        assert!(cos >= 1.0 - 1e-8);
        let t = &fit.scores;
        for a in 0..3 {
            for b in 0..a {
                let c = t.column(a).dot(&t.column(b)) / (t.column(a).norm() * t.column(b).norm());
                assert!(c.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pls_single_predictor_is_ols() {
        let x = gaussian(12, 25, 1);
        let y = response(&x, 13);
        let fit = pls_fit(&x, &y, 1).unwrap();
        let (b, _) = linalg::ols(&linalg::with_intercept(&x), &y);
        assert!((fit.coef[0] - b[1]).abs() < 1e-10 && (fit.intercept - b[0]).abs() < 1e-10);
    }

    #[test]
    fn vip_identities() {
        let x = gaussian(14, 50, 6);
        let y = response(&x, 15);
        for a in 1..=4 {
            let vip = vip_scores(&pls_fit(&x, &y, a).unwrap());
            let mean_sq = vip.iter().map(|v| v * v).sum::<f64>() / 6.0;
            assert!((mean_sq - 1.0).abs() < 1e-10);
            let scaled = vip_scores(&pls_fit(&x, &(y.clone() * 7.5), a).unwrap());
            for (u, v) in vip.iter().zip(&scaled) {
                assert!((u - v).abs() < 1e-10);
            }
        }
        let col = normal_draws(16, 30);
        let twin = DMatrix::from_fn(30, 2, |i, _| col[i]);
        let yt = DVector::from_fn(30, |i, _| col[i] * 2.0 + (i as f64).sin());
        let vip = vip_scores(&pls_fit(&twin, &yt, 1).unwrap());
        assert!((vip[0] - vip[1]).abs() < 1e-12);
    }

    #[test]
    fn pls_constant_target_is_degenerate() {
        let x = gaussian(17, 10, 2);
        assert!(matches!(pls_fit(&x, &DVector::from_element(10, 2.0), 1), Err(Error::Degenerate(_))));
    }

    fn dfm_data(n: usize, noise: f64) -> Dataset {
        let f = normal_draws(20, n);
        let e = normal_draws(21, n * 5);
        let mut x = DMatrix::from_fn(n, 6, |i, j| if j < 5 { f[i] * (1.0 + j as f64) + noise * e[i * 5 + j] } else { 0.0 });
        for i in 0..n {
            x[(i, 5)] = if i % 4 == 0 { 1.0 } else { 0.0 };
        }
        let pca = pca_decompose(&x.columns(0, 5).clone_owned(), 1).unwrap();
        let s = pca.scores(&x.columns(0, 5).clone_owned());
        let y = DVector::from_fn(n, |i, _| 0.3 + 0.8 * s[(i, 0)] - 0.5 * x[(i, 5)]);
        let mut kinds = vec![ColumnKind::Continuous; 5];
        kinds.push(ColumnKind::SeasonalDummy);
        Dataset::new(x, y, (0..6).map(|j| format!("x{j}")).collect(), kinds).unwrap()
    }

    #[test]
    fn dfm_exact_factor_target() {
        let data = dfm_data(40, 0.0);
        let rows: Vec<usize> = (0..39).collect();
        let fit = dfm_fit(&data, &rows, 1, 0).unwrap();
        let f = fit.forecast(&data, 39).unwrap();
        assert!((f - data.y[39]).abs() < 1e-8);
        let with_ar = dfm_fit_forecast(&data, &rows, 39, 1, 2).unwrap();
        assert!((with_ar - data.y[39]).abs() < 1e-8);
        assert!(fit.phi.is_empty());
    }

    #[test]
    fn dfm_ar_adds_residual_forecast() {
        let data = dfm_data(60, 0.5);
        let rows: Vec<usize> = (0..59).collect();
        let fit = dfm_fit(&data, &rows, 2, 1).unwrap();
        let reg = fit.regression_at(&data, 59);
        let expect = reg + fit.phi[0] * fit.residual_at(&data, 58);
        assert!((fit.forecast(&data, 59).unwrap() - expect).abs() < 1e-12);
        assert!(fit.phi.iter().all(|v| v.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pls_scores_orthogonal(seed in 0u64..500, a in 1usize..4) {
            let x = gaussian(seed, 30, 5);
            let y = response(&x, seed + 1);
            let fit = pls_fit(&x, &y, a).unwrap();
            let g = fit.scores.transpose() * &fit.scores;
            for i in 0..fit.components() {
                for j in 0..i {
                    prop_assert!(g[(i, j)].abs() <= 1e-6 * (g[(i, i)] * g[(j, j)]).sqrt());
                }
            }
        }
    }
}
