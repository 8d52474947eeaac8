//! Model families behind a single fit / predict / importance contract.
//!
//! Learners see a [`Dataset`] plus the row indices they may train on. Rows
//! are addressed by position in the dataset so lag- and window-based models
//! (AR, DFM residuals, GRU windows) can look back into earlier history
//! without ever touching rows at or after the forecast origin.

pub mod benchmark;
pub mod boost;
pub mod factor;
pub mod forest;
pub mod linear;
pub mod neural;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, SeriesFrame};
use crate::error::{Error, Result};
use crate::hpo::{Domain, Params, SearchSpace};

/// Design matrix and target addressed by row position.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    /// Target; `NaN` where the value is not available to the learner.
    pub y: DVector<f64>,
    pub features: Vec<String>,
    pub kinds: Vec<ColumnKind>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, features: Vec<String>, kinds: Vec<ColumnKind>) -> Result<Self> {
        if x.nrows() != y.len() || x.ncols() != features.len() || kinds.len() != features.len() {
            return Err(Error::Shape(format!(
                "dataset: x {}x{}, y {}, {} names, {} kinds",
                x.nrows(),
                x.ncols(),
                y.len(),
                features.len(),
                kinds.len()
            )));
        }
        Ok(Dataset { x, y, features, kinds })
    }

    /// Features of `frame` (in column order) and its target.
    pub fn from_frame(frame: &SeriesFrame) -> Result<Self> {
        let feats: Vec<_> = frame.features().collect();
        let n = frame.n_rows();
        let x = DMatrix::from_fn(n, feats.len(), |i, j| feats[j].values[i]);
        let y = DVector::from_vec(frame.target().values.clone());
        Dataset::new(
            x,
            y,
            feats.iter().map(|c| c.name.clone()).collect(),
            feats.iter().map(|c| c.kind).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_dummy(&self, j: usize) -> bool {
        self.kinds[j].is_dummy()
    }

    pub fn continuous_columns(&self) -> Vec<usize> {
        (0..self.n_features()).filter(|&j| !self.is_dummy(j)).collect()
    }

    pub fn dummy_columns(&self) -> Vec<usize> {
        (0..self.n_features()).filter(|&j| self.is_dummy(j)).collect()
    }

    /// Rows of `x` restricted to `rows` and `cols`.
    pub fn design(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.x[(rows[i], cols[j])])
    }

    pub fn targets(&self, rows: &[usize]) -> Result<DVector<f64>> {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("target unavailable on a training row".into()));
        }
        Ok(y)
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.x.row(r).iter().copied().collect()
    }
}

/// Intermediate-loss callback; returning `true` asks the learner to stop.
pub type Monitor<'a> = dyn FnMut(f64) -> bool + 'a;

/// Per-fit knobs that are not hyperparameters.
pub struct FitControl<'a> {
    pub seed: u64,
    /// Rows scored after every epoch by iterative learners (early stopping).
    pub validation: Option<Vec<usize>>,
    /// Exact epoch budget for iterative learners fit without validation.
    pub epochs: Option<usize>,
    pub monitor: Option<&'a mut Monitor<'a>>,
}

impl<'a> FitControl<'a> {
    pub fn new(seed: u64) -> Self {
        FitControl { seed, validation: None, epochs: None, monitor: None }
    }

    pub fn with_validation(mut self, rows: Vec<usize>) -> Self {
        self.validation = Some(rows);
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = Some(epochs);
        self
    }

    pub fn with_monitor(mut self, monitor: &'a mut Monitor<'a>) -> Self {
        self.monitor = Some(monitor);
        self
    }

    /// Forwards an intermediate loss; `Err(Pruned)` when the monitor says stop.
    pub fn report(&mut self, loss: f64) -> Result<()> {
        if let Some(m) = self.monitor.as_mut() {
            if m(loss) {
                return Err(Error::Pruned);
            }
        }
        Ok(())
    }
}

pub trait Learner: Send + Sync {
    fn fit(&self, data: &Dataset, rows: &[usize], ctl: &mut FitControl<'_>) -> Result<Box<dyn Fitted>>;
}

pub trait Fitted: Send + Sync {
    /// Forecast for `row` using features at `row` and targets strictly before it.
    fn predict(&self, data: &Dataset, row: usize) -> Result<f64>;

    /// One value per dataset feature, or `None` for models without a measure.
    fn importance(&self, _data: &Dataset, _eval_rows: &[usize]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    /// Epochs actually used by iterative learners.
    fn epochs(&self) -> Option<usize> {
        None
    }
}

/// How an importance measure should be ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceKind {
    Signed,
    Nonnegative,
}

/// Knobs shared by several families that are fixed rather than searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerOptions {
    pub ar_order: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub gru_window: usize,
    pub ig_steps: usize,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        LearnerOptions { ar_order: 3, max_epochs: 200, patience: 30, gru_window: 4, ig_steps: 50 }
    }
}

impl LearnerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::Config("patience must be smaller than max_epochs".into()));
        }
        if self.gru_window == 0 || self.ig_steps < 2 {
            return Err(Error::Config("gru_window must be positive and ig_steps at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "RW")]
    Rw,
    #[serde(rename = "AR")]
    Ar,
    #[serde(rename = "DFM")]
    Dfm,
    #[serde(rename = "LASSO")]
    Lasso,
    Ridge,
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "PCR")]
    Pcr,
    #[serde(rename = "PLSR")]
    Plsr,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "XGB")]
    Xgb,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "GRU")]
    Gru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 12] = [
        ModelKind::Rw,
        ModelKind::Ar,
        ModelKind::Dfm,
        ModelKind::Lasso,
        ModelKind::Ridge,
        ModelKind::En,
        ModelKind::Pcr,
        ModelKind::Plsr,
        ModelKind::Rf,
        ModelKind::Xgb,
        ModelKind::Mlp,
        ModelKind::Gru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rw => "RW",
            ModelKind::Ar => "AR",
            ModelKind::Dfm => "DFM",
            ModelKind::Lasso => "LASSO",
            ModelKind::Ridge => "Ridge",
            ModelKind::En => "EN",
            ModelKind::Pcr => "PCR",
            ModelKind::Plsr => "PLSR",
            ModelKind::Rf => "RF",
            ModelKind::Xgb => "XGB",
            ModelKind::Mlp => "MLP",
            ModelKind::Gru => "GRU",
        }
    }

    /// Benchmarks are reported against but excluded from MCS by default.
    pub fn is_benchmark(self) -> bool {
        matches!(self, ModelKind::Rw | ModelKind::Ar | ModelKind::Dfm)
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, ModelKind::Mlp | ModelKind::Gru)
    }

    pub fn importance_kind(self) -> Option<ImportanceKind> {
        match self {
            ModelKind::Rw | ModelKind::Ar | ModelKind::Dfm => None,
            ModelKind::Lasso | ModelKind::Ridge | ModelKind::En | ModelKind::Pcr => Some(ImportanceKind::Signed),
            ModelKind::Mlp | ModelKind::Gru => Some(ImportanceKind::Signed),
            ModelKind::Plsr | ModelKind::Rf | ModelKind::Xgb => Some(ImportanceKind::Nonnegative),
        }
    }

    /// Default search space; empty for models without tuned hyperparameters.
    pub fn default_space(self) -> SearchSpace {
        let s = SearchSpace::new();
        match self {
            ModelKind::Rw | ModelKind::Ar => s,
            ModelKind::Dfm => s.with("factors", Domain::int(1, 6)).with("ar_order", Domain::int(0, 4)),
            ModelKind::Lasso => s.with("alpha", Domain::log_real(1e-4, 10.0)),
            ModelKind::Ridge => s.with("alpha", Domain::log_real(1e-4, 1e3)),
            ModelKind::En => s
                .with("alpha", Domain::log_real(1e-4, 10.0))
                .with("l1_ratio", Domain::real(0.0, 1.0)),
            ModelKind::Pcr => s
                .with("components", Domain::int(1, 20))
                .with("alpha", Domain::log_real(1e-4, 1e3)),
            ModelKind::Plsr => s.with("components", Domain::int(1, 10)),
            ModelKind::Rf => s
                .with("n_estimators", Domain::int(20, 200))
                .with("max_depth", Domain::int(2, 12))
                .with("min_samples_leaf", Domain::int(1, 10))
                .with("max_features", Domain::real(0.1, 1.0))
                .with("criterion", Domain::categorical(["squared_error", "absolute_error"])),
            ModelKind::Xgb => s
                .with("n_rounds", Domain::int(20, 300))
                .with("learning_rate", Domain::log_real(0.01, 0.3))
                .with("max_depth", Domain::int(1, 6))
                .with("lambda", Domain::log_real(1e-3, 10.0))
                .with("gamma", Domain::log_real(1e-6, 5.0))
                .with("min_child_weight", Domain::real(1.0, 10.0))
                .with("subsample", Domain::real(0.5, 1.0))
                .with("colsample", Domain::real(0.5, 1.0)),
            ModelKind::Mlp => s
                .with("hidden_dim", Domain::int(4, 64))
                .with("num_layers", Domain::int(1, 2))
                .with("dropout", Domain::real(0.0, 0.5))
                .with("l2", Domain::log_real(1e-6, 1e-1))
                .with("lr", Domain::log_real(1e-4, 1e-1))
                .with("batch_size", Domain::int(8, 32)),
            ModelKind::Gru => s
                .with("hidden_dim", Domain::int(4, 32))
                .with("num_layers", Domain::int(1, 2))
                .with("dropout", Domain::real(0.0, 0.5))
                .with("l2", Domain::log_real(1e-6, 1e-1))
                .with("lr", Domain::log_real(1e-4, 1e-1))
                .with("batch_size", Domain::int(8, 32)),
        }
    }

    /// Instantiates the learner at a hyperparameter assignment. Missing
    /// parameters fall back to family defaults.
    pub fn build(self, p: &Params, opts: &LearnerOptions) -> Box<dyn Learner> {
        use neural::{GruLearner, MlpLearner, NetConfig, TrainSchedule};
        let net = || NetConfig {
            hidden_dim: p.usize_or("hidden_dim", 16),
            num_layers: p.usize_or("num_layers", 1),
            dropout: p.f64_or("dropout", 0.0),
            l2: p.f64_or("l2", 1e-4),
            schedule: TrainSchedule {
                max_epochs: opts.max_epochs,
                patience: opts.patience,
                lr: p.f64_or("lr", 1e-2),
                batch_size: p.usize_or("batch_size", 16),
            },
            ig_steps: opts.ig_steps,
        };
        match self {
            ModelKind::Rw => Box::new(benchmark::RandomWalk),
            ModelKind::Ar => Box::new(benchmark::Autoregressive { order: opts.ar_order }),
            ModelKind::Dfm => Box::new(factor::DfmLearner {
                factors: p.usize_or("factors", 2),
                ar_order: p.usize_or("ar_order", 1),
            }),
            ModelKind::Lasso => Box::new(linear::PenalizedLearner::lasso(p.f64_or("alpha", 0.1))),
            ModelKind::Ridge => Box::new(linear::PenalizedLearner::ridge(p.f64_or("alpha", 1.0))),
            ModelKind::En => Box::new(linear::PenalizedLearner::enet(
                p.f64_or("alpha", 0.1),
                p.f64_or("l1_ratio", 0.5),
            )),
            ModelKind::Pcr => Box::new(factor::PcrLearner {
                components: p.usize_or("components", 3),
                alpha: p.f64_or("alpha", 0.0),
            }),
            ModelKind::Plsr => Box::new(factor::PlsLearner { components: p.usize_or("components", 2) }),
            ModelKind::Rf => Box::new(forest::ForestParams {
                n_estimators: p.usize_or("n_estimators", 100),
                max_depth: p.usize_or("max_depth", 8),
                min_samples_leaf: p.usize_or("min_samples_leaf", 1),
                max_features: p.f64_or("max_features", 1.0 / 3.0),
                criterion: match p.str_or("criterion", "squared_error") {
                    "absolute_error" => tree::Criterion::AbsoluteError,
                    _ => tree::Criterion::SquaredError,
                },
            }),
            ModelKind::Xgb => Box::new(boost::BoostParams {
                n_rounds: p.usize_or("n_rounds", 100),
                learning_rate: p.f64_or("learning_rate", 0.1),
                max_depth: p.usize_or("max_depth", 3),
                lambda: p.f64_or("lambda", 1.0),
                gamma: p.f64_or("gamma", 0.0),
                min_child_weight: p.f64_or("min_child_weight", 1.0),
                subsample: p.f64_or("subsample", 1.0),
                colsample: p.f64_or("colsample", 1.0),
            }),
            ModelKind::Mlp => Box::new(MlpLearner { config: net() }),
            ModelKind::Gru => Box::new(GruLearner { config: net(), window: opts.gru_window }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase();
        let key = key.split('(').next().unwrap_or("").trim();
        let alias = match key {
            "RANDOM_WALK" | "RANDOMWALK" => "RW",
            "ELASTIC_NET" | "ELASTICNET" | "ENET" => "EN",
            "PLS" => "PLSR",
            "RANDOM_FOREST" => "RF",
            "XGBOOST" => "XGB",
            other => other,
        };
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(alias))
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// Mean squared error of `fitted` over `rows`.
pub fn mse_on(fitted: &dyn Fitted, data: &Dataset, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Shape("no rows to score".into()));
    }
    let mut acc = 0.0;
    for &r in rows {
        let e = fitted.predict(data, r)? - data.y[r];
        acc += e * e;
    }
    Ok(acc / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert_eq!("AR(3)".parse::<ModelKind>().unwrap(), ModelKind::Ar);
        assert_eq!("lasso".parse::<ModelKind>().unwrap(), ModelKind::Lasso);
        assert!("SVR".parse::<ModelKind>().is_err());
    }

    #[test]
    fn tuned_models_have_valid_spaces() {
        for m in ModelKind::ALL {
            let s = m.default_space();
            if matches!(m, ModelKind::Rw | ModelKind::Ar) {
                assert!(s.is_empty());
            } else {
                s.validate().unwrap();
            }
        }
    }

    #[test]
    fn dataset_shape_checked() {
        let r = Dataset::new(DMatrix::zeros(3, 2), DVector::zeros(4), vec!["a".into(), "b".into()], vec![ColumnKind::Continuous; 2]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
