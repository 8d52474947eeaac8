//! Seeded synthetic series and datasets, used by `selftest`, the acceptance
//! suite and the reference-value fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::data::{QuarterIndex, RawTable};

pub fn normal_draws(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn exponential_draws(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Exp1.sample(&mut rng)).collect()
}

pub fn uniform_draws(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `y_t = phi y_{t-1} + e_t`, `y_0 = e_0`, standard-normal innovations.
pub fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let e = normal_draws(seed, n);
    let mut y = Vec::with_capacity(n);
    let mut prev = 0.0;
    for v in e {
        prev = phi * prev + v;
        y.push(prev);
    }
    y
}

pub fn cumsum(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect()
}

/// Specification of a synthetic quarterly panel with planted signal.
#[derive(Debug, Clone)]
pub struct PanelSpec {
    pub start: QuarterIndex,
    pub quarters: usize,
    pub features: usize,
    pub factors: usize,
    pub factor_persistence: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PanelSpec {
    fn default() -> Self {
        PanelSpec {
            start: crate::data::q(1990, 1),
            quarters: 134,
            features: 10,
            factors: 2,
            factor_persistence: 0.5,
            noise: 0.5,
            seed: 42,
        }
    }
}

/// A raw quarterly table with a target column `gdp_growth` driven by AR(1)
/// latent factors that also load on the observed features. The regressors
/// carry contemporaneous signal about the target, while the target itself
/// has little persistence, so a random walk is a weak benchmark.
pub fn factor_panel(spec: &PanelSpec) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.quarters;
    let mut factors = vec![vec![0.0; spec.factors]; n];
    for t in 0..n {
        for k in 0..spec.factors {
            let prev = if t == 0 { 0.0 } else { factors[t - 1][k] };
            let e: f64 = StandardNormal.sample(&mut rng);
            factors[t][k] = spec.factor_persistence * prev + e;
        }
    }
    let loadings: Vec<Vec<f64>> = (0..spec.features)
        .map(|_| (0..spec.factors).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut columns = Vec::new();
    let mut xs = vec![vec![0.0; n]; spec.features];
    for (j, load) in loadings.iter().enumerate() {
        for t in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            xs[j][t] = load.iter().zip(&factors[t]).map(|(l, f)| l * f).sum::<f64>() + 0.5 * e;
        }
    }
    let beta: Vec<f64> = (0..spec.features)
        .map(|j| if j < spec.features / 2 { 1.0 / (1.0 + j as f64) } else { 0.0 })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|t| {
            let e: f64 = StandardNormal.sample(&mut rng);
            1.0 + (0..spec.features).map(|j| beta[j] * xs[j][t]).sum::<f64>() + spec.noise * e
        })
        .collect();
    columns.push(("gdp_growth".to_string(), y.into_iter().map(Some).collect()));
    for (j, x) in xs.into_iter().enumerate() {
        columns.push((format!("x{:02}", j + 1), x.into_iter().map(Some).collect()));
    }
    RawTable {
        index: (0..n as i64).map(|i| spec.start.offset(i)).collect(),
        columns,
    }
}
