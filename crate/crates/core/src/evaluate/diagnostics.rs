//! Residual normality and autocorrelation tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi2_sf, norm_ppf, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub statistic: f64,
    pub pvalue: f64,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Upper-half Shapiro-Wilk coefficients `a_n, a_{n-1}, ...` from Royston's
/// polynomial approximation.
fn sw_coefficients(n: usize) -> Vec<f64> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half).map(|i| norm_ppf((i as f64 - 0.375) / an25)).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        (2, ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt())
    } else {
        (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
    };
    for i in first..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Shapiro-Wilk W with Royston's normalizing transformation for the
/// p-value. Valid for `3 <= n <= 5000`.
pub fn shapiro_wilk(residuals: &[f64]) -> Result<Diagnostic> {
    let n = residuals.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::Domain(format!("Shapiro-Wilk needs 3..=5000 observations, got {n}")));
    }
    let mut x = residuals.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if !(range > 1e-19) {
        return Err(Error::Degenerate("residuals are constant".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let a = sw_coefficients(n);
    let mut num = 0.0;
    for (i, ai) in a.iter().enumerate() {
        num += ai * (x[n - 1 - i] - x[i]) / range;
    }
    let ss: f64 = x.iter().map(|v| ((v - mean) / range).powi(2)).sum();
    let w = (num * num / ss).min(1.0);
    let w1 = 1.0 - w;
    if n == 3 {
        let p = 1.90985931710274 * (w.sqrt().asin() - 1.04719755119660);
        return Ok(Diagnostic { statistic: w, pvalue: p.max(0.0) });
    }
    let an = n as f64;
    let y = w1.ln();
    let (z, mu, sigma) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return Ok(Diagnostic { statistic: w, pvalue: 1e-99 });
        }
        let mu = poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an);
        let sigma = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp();
        (-(gamma - y).ln(), mu, sigma)
    } else {
        let xx = an.ln();
        let mu = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], xx);
        let sigma = poly(&[-0.4803, -0.082676, 0.0030302], xx).exp();
        (y, mu, sigma)
    };
    Ok(Diagnostic { statistic: w, pvalue: norm_sf((z - mu) / sigma) })
}

/// Ljung-Box Q over lags `1..=lags`, chi-squared with `lags` degrees.
pub fn ljung_box(residuals: &[f64], lags: usize) -> Result<Diagnostic> {
    let n = residuals.len();
    if lags == 0 || n <= lags {
        return Err(Error::Domain(format!("Ljung-Box needs n > lags >= 1, got n = {n}, lags = {lags}")));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = residuals.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("residuals are constant".into()));
    }
    let nf = n as f64;
    let mut q = 0.0;
    for k in 1..=lags {
        let r: f64 = (k..n).map(|t| c[t] * c[t - k]).sum::<f64>() / c0;
        q += r * r / (nf - k as f64);
    }
    q *= nf * (nf + 2.0);
    Ok(Diagnostic { statistic: q, pvalue: chi2_sf(q, lags as f64) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{ar1, exponential_draws, normal_draws, uniform_draws};
    use proptest::prelude::*;

    // Reference values from an independent statistics library on the same draws.
    #[test]
    fn shapiro_wilk_matches_reference() {
        let cases = [
            (normal_draws(42, 20), 0.9343324171751942, 0.18702475763863496),
            (exponential_draws(43, 50), 0.8887066683937761, 0.00020785651253159594),
            (uniform_draws(44, 200), 0.9552170263140702, 6.214423322564812e-06),
        ];
        for (x, w, p) in cases {
            let d = shapiro_wilk(&x).unwrap();
            assert!((d.statistic - w).abs() < 1e-6, "{} vs {w}", d.statistic);
            assert!((d.pvalue - p).abs() < 1e-5, "{} vs {p}", d.pvalue);
        }
    }

    #[test]
    fn shapiro_wilk_edges() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(matches!(shapiro_wilk(&[2.0; 10]), Err(Error::Degenerate(_))));
        let d = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((d.statistic - 1.0).abs() < 1e-12 && d.pvalue > 0.99);
        for n in [4usize, 5, 7, 11] {
            let d = shapiro_wilk(&normal_draws(n as u64, n)).unwrap();
            assert!(d.statistic > 0.0 && d.statistic <= 1.0);
            assert!((0.0..=1.0).contains(&d.pvalue));
        }
        assert!(shapiro_wilk(&normal_draws(1, 20)).unwrap().pvalue > 0.05);
        assert!(shapiro_wilk(&exponential_draws(2, 50)).unwrap().pvalue < 0.01);
    }

    #[test]
    fn ljung_box_matches_reference() {
        let cases = [
            (ar1(42, 200, 0.8), 244.43108917788092, 1.0306919476330705e-51),
            (normal_draws(43, 200), 3.291345624793094, 0.5103046350226068),
            (normal_draws(44, 50), 2.7034792969843937, 0.6086059176097776),
        ];
        for (x, q, p) in cases {
            let d = ljung_box(&x, 4).unwrap();
            assert!((d.statistic - q).abs() < 1e-9, "{} vs {q}", d.statistic);
            assert!((d.pvalue - p).abs() <= 1e-9 * p.max(1e-12), "{} vs {p}", d.pvalue);
        }
    }

    #[test]
    fn ljung_box_edges() {
        assert!(ljung_box(&[1.0, 2.0, 3.0], 4).is_err());
        assert!(matches!(ljung_box(&[1.0; 10], 2), Err(Error::Degenerate(_))));
        let x = ar1(3, 100, 0.0);
        let mut s = x.clone();
        s.sort_by(f64::total_cmp);
        assert!(ljung_box(&s, 4).unwrap().statistic > ljung_box(&x, 4).unwrap().statistic);
    }

    #[test]
    fn zero_autocorrelation_gives_zero_q() {
        // Every lag-1 product of this sequence is zero.
        let d = ljung_box(&[0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0], 1).unwrap();
        assert_eq!(d.statistic, 0.0);
        assert_eq!(d.pvalue, 1.0);
    }

    proptest! {
        #[test]
        fn statistics_in_range(x in prop::collection::vec(-5.0f64..5.0, 12..80)) {
            if let Ok(d) = shapiro_wilk(&x) {
                prop_assert!(d.statistic > 0.0 && d.statistic <= 1.0);
                prop_assert!((0.0..=1.0).contains(&d.pvalue));
            }
            if let Ok(d) = ljung_box(&x, 4) {
                prop_assert!(d.statistic >= 0.0);
                prop_assert!((0.0..=1.0).contains(&d.pvalue));
            }
        }
    }
}
