//! One-dimensional Parzen estimators used by the TPE sampler.

use rand::Rng;

use crate::stats::{norm_cdf, norm_ppf};

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mixture of equal-weight Gaussian kernels truncated to `[low, high]`.
#[derive(Debug, Clone)]
pub struct TruncatedParzen {
    centers: Vec<f64>,
    bandwidth: f64,
    low: f64,
    high: f64,
    // log of each kernel's mass inside the bounds
    log_mass: Vec<f64>,
}

impl TruncatedParzen {
    /// Bandwidth is `max(range * 1.06 * n^(-1/5), eps)` with `eps` one
    /// thousandth of the range.
    pub fn fit(observations: &[f64], low: f64, high: f64) -> Self {
        let range = high - low;
        let n = observations.len().max(1) as f64;
        let bandwidth = (range * 1.06 * n.powf(-0.2)).max(1e-3 * range);
        let log_mass = observations
            .iter()
            .map(|&c| {
                let m = norm_cdf((high - c) / bandwidth) - norm_cdf((low - c) / bandwidth);
                m.max(1e-300).ln()
            })
            .collect();
        TruncatedParzen {
            centers: observations.to_vec(),
            bandwidth,
            low,
            high,
            log_mass,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.low || x > self.high {
            return f64::NEG_INFINITY;
        }
        if self.centers.is_empty() {
            return -(self.high - self.low).ln();
        }
        let terms: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.log_mass)
            .map(|(&c, &lm)| {
                let z = (x - c) / self.bandwidth;
                -0.5 * z * z - LOG_SQRT_2PI - self.bandwidth.ln() - lm
            })
            .collect();
        log_sum_exp(&terms) - (self.centers.len() as f64).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.centers.is_empty() {
            return self.low + (self.high - self.low) * rng.random::<f64>();
        }
        let c = self.centers[rng.random_range(0..self.centers.len())];
        let a = norm_cdf((self.low - c) / self.bandwidth);
        let b = norm_cdf((self.high - c) / self.bandwidth);
        let u = a + (b - a) * rng.random::<f64>();
        let p = u.clamp(1e-12, 1.0 - 1e-12);
        (c + self.bandwidth * norm_ppf(p)).clamp(self.low, self.high)
    }
}

/// Laplace-smoothed categorical distribution.
#[derive(Debug, Clone)]
pub struct SmoothedCategorical {
    probs: Vec<f64>,
}

impl SmoothedCategorical {
    pub fn fit(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        let denom = (total + counts.len()) as f64;
        SmoothedCategorical {
            probs: counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect(),
        }
    }

    pub fn log_pmf(&self, i: usize) -> f64 {
        self.probs[i].ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>();
        for (i, p) in self.probs.iter().enumerate() {
            if u < *p {
                return i;
            }
            u -= p;
        }
        self.probs.len() - 1
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
