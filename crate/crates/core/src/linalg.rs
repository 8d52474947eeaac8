//! Dense linear-algebra helpers on top of `nalgebra`.

use log::warn;
use nalgebra::{DMatrix, DVector};

/// Ridge added to the diagonal when normal equations are singular.
pub const SINGULAR_RIDGE: f64 = 1e-8;

/// Solves the symmetric positive (semi-)definite system `a x = b`.
///
/// Falls back to `a + 1e-8 I` when the Cholesky factorization fails, and to
/// an SVD pseudo-inverse if that still fails. The flag reports whether any
/// regularization was needed.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return (x, false);
        }
    }
    let n = a.nrows();
    let scale = (a.trace() / n.max(1) as f64).abs().max(1.0);
    let reg = a + DMatrix::identity(n, n) * (SINGULAR_RIDGE * scale);
    if let Some(ch) = reg.clone().cholesky() {
        warn!("singular normal equations; solved with ridge {SINGULAR_RIDGE:e}");
        return (ch.solve(b), true);
    }
    warn!("normal equations not positive definite; using pseudo-inverse");
    let svd = reg.svd(true, true);
    let x = svd
        .solve(b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(n));
    (x, true)
}

/// Ordinary least squares of `y` on the columns of `x` (no implicit intercept).
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, bool) {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    solve_spd(&xtx, &xty)
}

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    out.columns_mut(1, x.ncols()).copy_from(x);
    out
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtracts `means` from every row.
pub fn center(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}
