use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub msfe: f64,
    pub rmsfe: f64,
    pub mafe: f64,
    pub n: usize,
}

pub fn metrics(forecasts: &[f64], actuals: &[f64]) -> Result<MetricBundle> {
    if forecasts.len() != actuals.len() {
        return Err(Error::Alignment(format!(
            "{} forecasts for {} actuals",
            forecasts.len(),
            actuals.len()
        )));
    }
    if forecasts.is_empty() {
        return Err(Error::Alignment("metrics need at least one forecast".into()));
    }
    let n = forecasts.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (f, a) in forecasts.iter().zip(actuals) {
        let e = f - a;
        se += e * e;
        ae += e.abs();
    }
    if !(se.is_finite() && ae.is_finite()) {
        return Err(Error::Numeric("forecast errors are not finite".into()));
    }
    let msfe = se / n;
    Ok(MetricBundle { msfe, rmsfe: msfe.sqrt(), mafe: ae / n, n: forecasts.len() })
}

pub fn rmsfe_ratio(model: &MetricBundle, benchmark: &MetricBundle) -> Result<f64> {
    if !(benchmark.rmsfe > 0.0) {
        return Err(Error::Numeric("benchmark RMSFE is zero".into()));
    }
    Ok(model.rmsfe / benchmark.rmsfe)
}
