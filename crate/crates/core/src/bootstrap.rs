//! Segmented pair block bootstrap for prediction intervals and importance
//! confidence intervals.
//!
//! Train+validation rows are cut at structural breaks; within each segment
//! contiguous blocks of (x, y) rows are drawn with replacement and truncated
//! to the segment length. Every replicate refits the learner with its
//! hyperparameters frozen and forecasts the same test row.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{q, QuarterIndex, SeriesFrame};
use crate::error::{Error, Result};
use crate::learners::{Dataset, FitControl, Learner};
use crate::par::{derive_seed, map_range, stream_rng};
use crate::stats::{mean, quantile_sorted};

/// Replicate failures above this share abort the interval.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakSchedule {
    pub breaks: Vec<QuarterIndex>,
}

impl Default for BreakSchedule {
    fn default() -> Self {
        BreakSchedule {
            breaks: vec![q(1997, 3), q(2001, 1), q(2003, 1), q(2008, 3), q(2020, 1), q(2022, 1)],
        }
    }
}

impl BreakSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("break quarters must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub block_len: usize,
    pub replicates: usize,
    /// Probability in each tail.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { block_len: 4, replicates: 1000, alpha: 0.025, seed: 42 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_len < 1 {
            return Err(Error::Config("bootstrap block length must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("bootstrap alpha {} outside (0, 0.5)", self.alpha)));
        }
        if self.replicates < 1 {
            return Err(Error::Config("bootstrap needs at least one replicate".into()));
        }
        Ok(())
    }
}

/// Positions in `index` at which each segment starts and ends. A break
/// quarter opens a new segment; breaks outside the index are ignored.
pub fn segment_ranges(index: &[QuarterIndex], breaks: &BreakSchedule) -> Vec<Range<usize>> {
    if index.is_empty() {
        return vec![];
    }
    let mut cuts: Vec<usize> = breaks
        .breaks
        .iter()
        .filter_map(|b| index.iter().position(|qi| qi == b))
        .filter(|&p| p > 0)
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        out.push(start..c);
        start = c;
    }
    out.push(start..index.len());
    out
}

/// Contiguous partition of a frame at the break quarters.
pub fn segment(frame: &SeriesFrame, breaks: &BreakSchedule) -> Vec<SeriesFrame> {
    let index = frame.index();
    segment_ranges(index, breaks)
        .into_iter()
        .map(|r| {
            frame.slice(crate::data::QuarterRange { start: index[r.start], end: index[r.end - 1] })
        })
        .collect()
}

/// Moving-block resample of `rows`: blocks of `block_len` consecutive
/// entries with uniform start positions, concatenated and truncated to the
/// input length. Segments shorter than a block are returned unchanged.
pub fn resample_segment<T: Copy>(rows: &[T], block_len: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = rows.len();
    let b = block_len.max(1).min(n.max(1));
    let mut out = Vec::with_capacity(n + b);
    while out.len() < n {
        let s = rng.random_range(0..=n - b);
        out.extend_from_slice(&rows[s..s + b]);
    }
    out.truncate(n);
    out
}

/// One replicate's row sample: every segment resampled independently.
pub fn resample_rows(rows: &[usize], segments: &[Range<usize>], block_len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    segments
        .iter()
        .flat_map(|s| resample_segment(&rows[s.clone()], block_len, rng))
        .collect()
}

/// What a bootstrap needs to know about one split.
#[derive(Debug, Clone)]
pub struct BootstrapTask<'a> {
    pub data: &'a Dataset,
    /// Train+validation rows, in time order.
    pub fit_rows: &'a [usize],
    /// Quarters of `fit_rows`, used to locate breaks.
    pub fit_quarters: &'a [QuarterIndex],
    pub test_row: usize,
    /// Rows over which importance is evaluated, if requested.
    pub importance_rows: Option<&'a [usize]>,
    /// Epoch cap for iterative learners.
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSet {
    pub forecasts: Vec<f64>,
    /// One vector per successful replicate; empty when importance is off.
    pub importances: Vec<Vec<f64>>,
    pub failures: usize,
}

/// Shared replicate loop. Replicate `b` draws its resample from stream `b`
/// of the configured seed, so results do not depend on scheduling.
pub fn run_replicates(
    learner: &dyn Learner,
    task: &BootstrapTask<'_>,
    breaks: &BreakSchedule,
    cfg: &BootstrapConfig,
) -> Result<ReplicateSet> {
    cfg.validate()?;
    if task.fit_rows.len() != task.fit_quarters.len() {
        return Err(Error::Shape("fit rows and quarters differ in length".into()));
    }
    let segments = segment_ranges(task.fit_quarters, breaks);
    let outcomes: Vec<Option<(f64, Option<Vec<f64>>)>> = map_range(cfg.replicates, |b| {
        let mut rng = stream_rng(cfg.seed, b as u64);
        let rows = resample_rows(task.fit_rows, &segments, cfg.block_len, &mut rng);
        let mut ctl = FitControl::new(derive_seed(cfg.seed, b as u64));
        if let Some(e) = task.epochs {
            ctl = ctl.with_epochs(e);
        }
        let fit = learner.fit(task.data, &rows, &mut ctl).ok()?;
        let f = fit.predict(task.data, task.test_row).ok().filter(|v| v.is_finite())?;
        let imp = match task.importance_rows {
            Some(r) => Some(fit.importance(task.data, r).ok()??),
            None => None,
        };
        Some((f, imp))
    });
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    if failures as f64 > MAX_FAILURE_SHARE * cfg.replicates as f64 {
        return Err(Error::Bootstrap(format!("{failures} of {} replicates failed", cfg.replicates)));
    }
    let mut set = ReplicateSet { forecasts: vec![], importances: vec![], failures };
    for (f, imp) in outcomes.into_iter().flatten() {
        set.forecasts.push(f);
        if let Some(v) = imp {
            set.importances.push(v);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn from_draws(draws: &[f64], alpha: f64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Bootstrap("no replicate forecasts".into()));
        }
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(PredictionInterval {
            lower: quantile_sorted(&s, alpha),
            median: quantile_sorted(&s, 0.5),
            upper: quantile_sorted(&s, 1.0 - alpha),
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ImportanceInterval {
    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Per-feature empirical quantiles of the replicate importances.
pub fn importance_intervals(set: &ReplicateSet, alpha: f64) -> Result<Vec<ImportanceInterval>> {
    let Some(p) = set.importances.first().map(Vec::len) else {
        return Err(Error::Bootstrap("no replicate importances".into()));
    };
    if set.importances.iter().any(|v| v.len() != p) {
        return Err(Error::Shape("replicate importances differ in length".into()));
    }
    Ok((0..p)
        .map(|j| {
            let mut col: Vec<f64> = set.importances.iter().map(|v| v[j]).collect();
            let m = mean(&col);
            col.sort_by(f64::total_cmp);
            ImportanceInterval { mean: m, lower: quantile_sorted(&col, alpha), upper: quantile_sorted(&col, 1.0 - alpha) }
        })
        .collect())
}

pub fn prediction_interval(
    learner: &dyn Learner,
    task: &BootstrapTask<'_>,
    breaks: &BreakSchedule,
    cfg: &BootstrapConfig,
) -> Result<(PredictionInterval, ReplicateSet)> {
    let set = run_replicates(learner, task, breaks, cfg)?;
    Ok((PredictionInterval::from_draws(&set.forecasts, cfg.alpha)?, set))
}

pub fn importance_ci(
    learner: &dyn Learner,
    task: &BootstrapTask<'_>,
    breaks: &BreakSchedule,
    cfg: &BootstrapConfig,
) -> Result<Vec<ImportanceInterval>> {
    if task.importance_rows.is_none() {
        return Err(Error::Bootstrap("importance rows not given".into()));
    }
    importance_intervals(&run_replicates(learner, task, breaks, cfg)?, cfg.alpha)
}
