//! Per-(model, split) work: tuning, final fit, forecast, importance and
//! bootstrap intervals.

use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{importance_intervals, run_replicates, BootstrapTask, ImportanceInterval, PredictionInterval};
use crate::config::{fnv1a, RunConfig};
use crate::data::{iterative_standardize, QuarterIndex, SeriesFrame};
use crate::error::{Error, Result};
use crate::hpo::{optimize, Params, TrialMonitor, TrialStatus};
use crate::learners::{mse_on, Dataset, FitControl, ModelKind};
use crate::par::derive_seed;
use crate::windows::{neutralize_shock_dummies, SplitPlan};

/// Design matrix and row roles for one split.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub data: Dataset,
    pub quarters: Vec<QuarterIndex>,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
    /// Present for the final-fit view only.
    pub test_row: Option<usize>,
}

impl SplitData {
    pub fn fit_rows(&self) -> Vec<usize> {
        self.train_rows.iter().chain(&self.validation_rows).copied().collect()
    }
}

fn rows_in(frame: &SeriesFrame, from: QuarterIndex, to: QuarterIndex) -> Vec<usize> {
    frame.index().iter().enumerate().filter(|(_, q)| **q >= from && **q <= to).map(|(i, _)| i).collect()
}

/// Tuning view: continuous columns scaled on the training block and
/// applied through the validation window. Nothing after the validation
/// window is read.
pub fn tuning_view(frame: &SeriesFrame, split: &SplitPlan) -> Result<SplitData> {
    let f = neutralize_shock_dummies(&frame.truncate_after(split.test), split).truncate_after(split.validation.end);
    let (scaled, _) = iterative_standardize(&f.slice(split.train), &f)?;
    Ok(SplitData {
        data: Dataset::from_frame(&scaled)?,
        quarters: scaled.index().to_vec(),
        train_rows: rows_in(&scaled, split.train.start, split.train.end),
        validation_rows: rows_in(&scaled, split.validation.start, split.validation.end),
        test_row: None,
    })
}

/// Final view: scaled on train+validation, applied through the test
/// quarter, whose target is hidden.
pub fn final_view(frame: &SeriesFrame, split: &SplitPlan) -> Result<SplitData> {
    let f = neutralize_shock_dummies(&frame.truncate_after(split.test), split);
    if f.index().last() != Some(&split.test) {
        return Err(Error::Shape(format!("data ends before test quarter {}", split.test)));
    }
    let (scaled, _) = iterative_standardize(&f.truncate_after(split.validation.end), &f)?;
    let mut data = Dataset::from_frame(&scaled)?;
    let test_row = data.n_rows() - 1;
    data.y[test_row] = f64::NAN;
    Ok(SplitData {
        data,
        quarters: scaled.index().to_vec(),
        train_rows: rows_in(&scaled, split.train.start, split.train.end),
        validation_rows: rows_in(&scaled, split.validation.start, split.validation.end),
        test_row: Some(test_row),
    })
}

/// Everything the run keeps about one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub model: String,
    pub split: usize,
    pub test: QuarterIndex,
    pub params: Params,
    pub validation_mse: f64,
    pub trials: usize,
    pub pruned: usize,
    pub epochs: Option<usize>,
    pub forecast: f64,
    pub actual: f64,
    pub interval: Option<PredictionInterval>,
    pub bootstrap_failures: usize,
    pub features: Vec<String>,
    pub importance: Option<Vec<f64>>,
    pub importance_ci: Option<Vec<ImportanceInterval>>,
}

/// Tunes, refits and bootstraps `model` on one split.
pub fn run_model_split(cfg: &RunConfig, model: ModelKind, index: usize, split: &SplitPlan, frame: &SeriesFrame) -> Result<SplitRecord> {
    let actual = frame
        .row_of(split.test)
        .map(|r| frame.target().values[r])
        .ok_or_else(|| Error::Shape(format!("test quarter {} not in data", split.test)))?;

    let tune = tuning_view(frame, split)?;
    let space = cfg.space_for(model)?;
    let study_cfg = cfg.study(model, index);
    let mut epochs_log: Vec<Option<usize>> = Vec::new();
    let mut trial = |p: &Params, mut monitor: Option<&mut TrialMonitor<'_>>| -> Result<f64> {
        let seed = derive_seed(study_cfg.seed, epochs_log.len() as u64);
        let learner = model.build(p, &cfg.learners);
        let mut report = |l: f64| monitor.as_deref_mut().is_some_and(|m| m.report(l));
        let mut ctl = FitControl::new(seed).with_validation(tune.validation_rows.clone()).with_monitor(&mut report);
        let fit = learner.fit(&tune.data, &tune.train_rows, &mut ctl);
        epochs_log.push(fit.as_ref().ok().and_then(|f| f.epochs()));
        mse_on(fit?.as_ref(), &tune.data, &tune.validation_rows)
    };
    // Models without hyperparameters are scored once and kept as is.
    let (params, validation_mse, trials, pruned, best_trial) = if space.is_empty() {
        let p = Params::default();
        let loss = trial(&p, None)?;
        (p, loss, 1, 0, 0)
    } else {
        let (params, study) = optimize(&space, &study_cfg, |p, m| trial(p, Some(m)))?;
        let best = study.best().expect("optimize returned a best trial");
        let pruned = study.trials.iter().filter(|t| t.status == TrialStatus::Pruned).count();
        (params, best.final_loss.unwrap_or(f64::NAN), study.trials.len(), pruned, best.number)
    };
    let epochs = epochs_log[best_trial];
    debug!("{} split {index}: best {params:?} val mse {validation_mse}", model.name());

    let fin = final_view(frame, split)?;
    let test_row = fin.test_row.expect("final view has a test row");
    let fit_rows = fin.fit_rows();
    let learner = model.build(&params, &cfg.learners);
    let mut ctl = FitControl::new(derive_seed(study_cfg.seed, 0xF1_4A1));
    if let Some(e) = epochs {
        ctl = ctl.with_epochs(e);
    }
    let fitted = learner.fit(&fin.data, &fit_rows, &mut ctl)?;
    let forecast = fitted.predict(&fin.data, test_row)?;
    if !forecast.is_finite() {
        return Err(Error::Numeric(format!("{} forecast for {} is not finite", model.name(), split.test)));
    }
    let eval_rows: Vec<usize> = fin.validation_rows.iter().copied().chain([test_row]).collect();
    let importance = if model.importance_kind().is_some() { fitted.importance(&fin.data, &eval_rows)? } else { None };

    let (mut interval, mut importance_ci, mut failures) = (None, None, 0);
    if cfg.bootstrap.enabled {
        let fit_quarters: Vec<QuarterIndex> = fit_rows.iter().map(|&r| fin.quarters[r]).collect();
        let task = BootstrapTask {
            data: &fin.data,
            fit_rows: &fit_rows,
            fit_quarters: &fit_quarters,
            test_row,
            importance_rows: importance.as_ref().map(|_| eval_rows.as_slice()),
            epochs,
        };
        let bcfg = cfg.bootstrap_config(model, index);
        let set = run_replicates(learner.as_ref(), &task, &cfg.breaks(), &bcfg)?;
        failures = set.failures;
        interval = Some(PredictionInterval::from_draws(&set.forecasts, bcfg.alpha)?);
        if importance.is_some() {
            importance_ci = Some(importance_intervals(&set, bcfg.alpha)?);
        }
    }

    Ok(SplitRecord {
        model: model.name().to_string(),
        split: index,
        test: split.test,
        params,
        validation_mse,
        trials,
        pruned,
        epochs,
        forecast,
        actual,
        interval,
        bootstrap_failures: failures,
        features: fin.data.features.clone(),
        importance,
        importance_ci,
    })
}

/// Cache key for one (model, split) cell; covers the config, the data
/// visible to the split and the cell coordinates.
pub fn cache_key(cfg_digest: u64, frame: &SeriesFrame, model: ModelKind, split: &SplitPlan, index: usize) -> Result<u64> {
    let visible = serde_json::to_string(&frame.truncate_after(split.test))?;
    let tag = format!("{cfg_digest:016x}|{}|{index}|{}|{}", model.name(), split.test, fnv1a(visible.as_bytes()));
    Ok(fnv1a(tag.as_bytes()))
}

pub fn load_cached(dir: &Path, key: u64) -> Option<SplitRecord> {
    let text = std::fs::read_to_string(dir.join(format!("{key:016x}.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn store_cached(dir: &Path, key: u64, record: &SplitRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{key:016x}.json")), serde_json::to_string(record)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, IngestConfig};
    use crate::synthetic::{factor_panel, PanelSpec};
    use crate::windows::{plan_walk_forward, Horizon};

    fn frame() -> SeriesFrame {
        prepare(&factor_panel(&PanelSpec::default()), &IngestConfig::new("gdp_growth")).unwrap().0
    }

    fn plan(f: &SeriesFrame) -> Vec<SplitPlan> {
        plan_walk_forward(f.range().unwrap(), &Horizon::default()).unwrap()
    }

    #[test]
    fn views_have_expected_rows() {
        let f = frame();
        let s = plan(&f)[0];
        let t = tuning_view(&f, &s).unwrap();
        assert_eq!(t.validation_rows.len(), 12);
        assert_eq!(t.data.n_rows(), t.train_rows.len() + 12);
        let v = final_view(&f, &s).unwrap();
        assert_eq!(v.test_row, Some(v.data.n_rows() - 1));
        assert_eq!(v.quarters[v.data.n_rows() - 1], s.test);
        assert!(v.data.y[v.data.n_rows() - 1].is_nan());
        assert_eq!(v.fit_rows().len(), v.data.n_rows() - 1);
        // Training columns are centred in the tuning view.
        let j = t.data.continuous_columns()[0];
        let m: f64 = t.train_rows.iter().map(|&r| t.data.x[(r, j)]).sum::<f64>() / t.train_rows.len() as f64;
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn record_for_ridge_split() {
        let f = frame();
        let s = plan(&f)[3];
        let mut cfg = RunConfig::new("unused.csv", "gdp_growth");
        cfg.hpo.n_trials = 8;
        cfg.bootstrap.replicates = 40;
        let r = run_model_split(&cfg, ModelKind::Ridge, 3, &s, &f).unwrap();
        assert_eq!(r.trials, 8);
        assert_eq!(r.test, s.test);
        let pi = r.interval.unwrap();
        assert!(pi.lower <= pi.upper);
        assert_eq!(r.importance.as_ref().unwrap().len(), r.features.len());
        assert_eq!(r.importance_ci.as_ref().unwrap().len(), r.features.len());
        let again = run_model_split(&cfg, ModelKind::Ridge, 3, &s, &f).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
        let rw = run_model_split(&cfg, ModelKind::Rw, 3, &s, &f).unwrap();
        assert_eq!(rw.trials, 1);
        assert_eq!(rw.forecast, f.target().values[f.row_of(s.test.pred()).unwrap()]);
        assert_eq!(rw.interval.unwrap().width(), 0.0);
        assert!(rw.importance.is_none());
    }

    #[test]
    fn cache_round_trip() {
        let f = frame();
        let s = plan(&f)[0];
        let mut cfg = RunConfig::new("unused.csv", "gdp_growth");
        cfg.bootstrap.enabled = false;
        let r = run_model_split(&cfg, ModelKind::Ar, 0, &s, &f).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let k = cache_key(cfg.digest().unwrap(), &f, ModelKind::Ar, &s, 0).unwrap();
        assert_ne!(k, cache_key(cfg.digest().unwrap(), &f, ModelKind::Ar, &plan(&f)[1], 1).unwrap());
        store_cached(dir.path(), k, &r).unwrap();
        assert_eq!(load_cached(dir.path(), k), Some(r));
    }
}
