//! Random walk and AR(p) benchmarks.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{Dataset, FitControl, Fitted, Learner};
use crate::error::{Error, Result};
use crate::linalg;

/// Last observed value.
pub fn rw_forecast(y: &[f64]) -> Result<f64> {
    y.last().copied().ok_or_else(|| Error::Shape("random walk needs a nonempty series".into()))
}

/// OLS estimates of an AR(p) with intercept: `[alpha, phi_1, .., phi_p]`.
pub fn ar_fit(y: &[f64], p: usize) -> Result<DVector<f64>> {
    if y.len() <= p + 1 {
        return Err(Error::Shape(format!("AR({p}) needs more than {} observations, got {}", p + 1, y.len())));
    }
    let n = y.len() - p;
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { y[p + i - j] });
    let t = DVector::from_iterator(n, y[p..].iter().copied());
    let (beta, regularized) = linalg::ols(&x, &t);
    if regularized {
        warn!("AR({p}) normal equations singular; ridge-regularized");
    }
    Ok(beta)
}

/// One-step forecast `alpha + sum phi_i y_{t+1-i}` from the fitted series.
pub fn ar_fit_forecast(y: &[f64], p: usize) -> Result<f64> {
    let beta = ar_fit(y, p)?;
    Ok(ar_predict(&beta, |i| y[y.len() - i]))
}

fn ar_predict(beta: &DVector<f64>, lag: impl Fn(usize) -> f64) -> f64 {
    beta[0] + (1..beta.len()).map(|i| beta[i] * lag(i)).sum::<f64>()
}

#[derive(Debug, Clone, Copy)]
pub struct RandomWalk;

struct RwFit;

impl Learner for RandomWalk {
    fn fit(&self, _data: &Dataset, _rows: &[usize], _ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(RwFit))
    }
}

impl Fitted for RwFit {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        if row == 0 {
            return Err(Error::Shape("random walk has no prior observation".into()));
        }
        Ok(data.y[row - 1])
    }
}

/// AR(p) on the target alone. Each training row `t` is the pair
/// `(y_{t-1..t-p}, y_t)`, so resampled row sets keep their own lags.
#[derive(Debug, Clone, Copy)]
pub struct Autoregressive {
    pub order: usize,
}

struct ArFit {
    beta: DVector<f64>,
}

impl Learner for Autoregressive {
    fn fit(&self, data: &Dataset, rows: &[usize], _ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>> {
        let p = self.order;
        let usable: Vec<usize> = rows.iter().copied().filter(|&r| r >= p).collect();
        if usable.len() <= p + 1 {
            return Err(Error::Shape(format!("AR({p}) has only {} usable rows", usable.len())));
        }
        let x = DMatrix::from_fn(usable.len(), p + 1, |i, j| if j == 0 { 1.0 } else { data.y[usable[i] - j] });
        let t = data.targets(&usable)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("missing lagged target".into()));
        }
        let (beta, regularized) = linalg::ols(&x, &t);
        if regularized {
            warn!("AR({p}) normal equations singular; ridge-regularized");
        }
        Ok(Box::new(ArFit { beta }))
    }
}

impl Fitted for ArFit {
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64> {
        let p = self.beta.len() - 1;
        if row < p {
            return Err(Error::Shape(format!("AR({p}) forecast needs {p} lags at row {row}")));
        }
        Ok(ar_predict(&self.beta, |i| data.y[row - i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::ar1;

    #[test]
    fn random_walk_examples() {
        assert_eq!(rw_forecast(&[0.3, -1.0, 1.7]).unwrap(), 1.7);
        assert_eq!(rw_forecast(&[5.0]).unwrap(), 5.0);
        assert_eq!(rw_forecast(&[2.5; 9]).unwrap(), 2.5);
        assert!(matches!(rw_forecast(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn ar1_coefficient_recovered() {
        let y = ar1(42, 500, 0.5);
        let beta = ar_fit(&y, 1).unwrap();
        // Oracle: closed-form simple regression of y_t on y_{t-1}.
        let (a, b) = (&y[..499], &y[1..]);
        let (ma, mb) = (a.iter().sum::<f64>() / 499.0, b.iter().sum::<f64>() / 499.0);
        let sxy: f64 = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum();
        let sxx: f64 = a.iter().map(|u| (u - ma).powi(2)).sum();
        let phi = sxy / sxx;
        assert!((beta[1] - phi).abs() < 1e-10);
        assert!((beta[0] - (mb - phi * ma)).abs() < 1e-10);
        assert!((0.4..=0.6).contains(&beta[1]));
    }

    #[test]
    fn constant_series_forecasts_constant() {
        for p in 1..=4 {
            let f = ar_fit_forecast(&[3.25; 20], p).unwrap();
            assert!((f - 3.25).abs() < 1e-6, "p={p}: {f}");
        }
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(ar_fit(&[1.0, 2.0, 3.0, 4.0], 3).is_err());
    }

    #[test]
    fn learner_matches_series_function() {
        let y = ar1(7, 60, 0.6);
        let data = Dataset::new(
            DMatrix::zeros(61, 0),
            DVector::from_iterator(61, y.iter().copied().chain([f64::NAN])),
            vec![],
            vec![],
        )
        .unwrap();
        let rows: Vec<usize> = (0..60).collect();
        let fit = Autoregressive { order: 3 }.fit(&data, &rows, &mut FitControl::new(0)).unwrap();
        let direct = ar_fit_forecast(&y, 3).unwrap();
        assert!((fit.predict(&data, 60).unwrap() - direct).abs() < 1e-10);
        let rw = RandomWalk.fit(&data, &rows, &mut FitControl::new(0)).unwrap();
        assert_eq!(rw.predict(&data, 60).unwrap(), y[59]);
    }
}
