//! Series transformations: deflation and growth, frequency alignment, gap
//! filling, dummy construction and train-only standardization.

use serde::{Deserialize, Serialize};

use super::frame::{Column, ColumnKind, SeriesFrame};
use super::quarter::QuarterIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
    EndOfPeriod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformSpec {
    pub forward_fill_limit: usize,
    pub adf_alpha: f64,
    /// Lag order of the augmented Dickey-Fuller regression.
    pub adf_lags: usize,
    /// Percent growth at or below which the negative-shock dummy fires.
    pub neg_shock_threshold: f64,
    /// Percent growth at or above which the positive-shock dummy fires.
    pub pos_shock_threshold: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            forward_fill_limit: 9,
            adf_alpha: 0.05,
            adf_lags: 4,
            neg_shock_threshold: -2.5,
            pos_shock_threshold: 5.0,
        }
    }
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.neg_shock_threshold < 0.0 && 0.0 < self.pos_shock_threshold) {
            return Err(Error::Config(
                "shock thresholds must satisfy neg < 0 < pos".into(),
            ));
        }
        if !(self.adf_alpha > 0.0 && self.adf_alpha < 1.0) {
            return Err(Error::Config("adf_alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Real quarter-over-quarter growth in percent from a nominal level and its
/// deflator. The output is one element shorter than the inputs.
pub fn deflate_and_growth(nominal: &[f64], deflator: &[f64]) -> Result<Vec<f64>> {
    if nominal.len() != deflator.len() {
        return Err(Error::Shape(format!(
            "nominal has {} values, deflator {}",
            nominal.len(),
            deflator.len()
        )));
    }
    if nominal.len() < 2 {
        return Err(Error::Shape("growth needs at least two observations".into()));
    }
    if let Some(i) = deflator.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Domain(format!("deflator entry {i} is not strictly positive")));
    }
    let real: Vec<f64> = nominal
        .iter()
        .zip(deflator)
        .map(|(n, d)| 100.0 * n / d)
        .collect();
    Ok(growth_rate(&real))
}

/// Percent growth of a level series, `100 (x_t - x_{t-1}) / x_{t-1}`.
pub fn growth_rate(level: &[f64]) -> Vec<f64> {
    level
        .windows(2)
        .map(|w| 100.0 * (w[1] - w[0]) / w[0])
        .collect()
}

/// Collapses a monthly series (three values per quarter) to quarterly.
pub fn aggregate_monthly(values: &[f64], method: Aggregation) -> Result<Vec<f64>> {
    if values.len() % 3 != 0 {
        return Err(Error::Shape(format!(
            "monthly series of length {} does not cover whole quarters",
            values.len()
        )));
    }
    Ok(values
        .chunks_exact(3)
        .map(|m| match method {
            Aggregation::Sum => m[0] + m[1] + m[2],
            Aggregation::Mean => (m[0] + m[1] + m[2]) / 3.0,
            Aggregation::EndOfPeriod => m[2],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum FillOutcome {
    Filled(Vec<f64>),
    /// Too many leading gaps; the column should be dropped.
    Removed { leading_gaps: usize },
}

/// Replaces each gap with the most recent observed value.
///
/// A series with at least `limit + 1` leading gaps is flagged for removal;
/// fewer leading gaps cannot be filled and are rejected.
pub fn forward_fill(series: &[Option<f64>], limit: usize) -> Result<FillOutcome> {
    let leading = series.iter().take_while(|v| v.is_none()).count();
    if leading > limit {
        return Ok(FillOutcome::Removed { leading_gaps: leading });
    }
    if leading > 0 {
        return Err(Error::Ingestion(format!(
            "{leading} leading gap(s) with no prior value to carry forward"
        )));
    }
    let mut last = f64::NAN;
    let out = series
        .iter()
        .map(|v| {
            if let Some(x) = v {
                last = *x;
            }
            last
        })
        .collect();
    Ok(FillOutcome::Filled(out))
}

pub const SEASONAL_NAMES: [&str; 3] = ["season_q1", "season_q2", "season_q3"];
pub const NEG_SHOCK_NAME: &str = "shock_negative";
pub const POS_SHOCK_NAME: &str = "shock_positive";

/// Seasonal indicators for Q1..Q3 (Q4 is the baseline).
pub fn seasonal_indicators(quarter: QuarterIndex) -> [f64; 3] {
    let mut s = [0.0; 3];
    if quarter.quarter() < 4 {
        s[quarter.quarter() as usize - 1] = 1.0;
    }
    s
}

/// Three seasonal dummies followed by the negative and positive shock dummies.
pub fn build_dummies(
    index: &[QuarterIndex],
    target_growth: &[f64],
    spec: &TransformSpec,
) -> Result<Vec<Column>> {
    if index.len() != target_growth.len() {
        return Err(Error::Shape("target is not aligned to the quarter index".into()));
    }
    let mut seasonal: Vec<Vec<f64>> = vec![Vec::with_capacity(index.len()); 3];
    for &qi in index {
        for (col, v) in seasonal.iter_mut().zip(seasonal_indicators(qi)) {
            col.push(v);
        }
    }
    let mut cols: Vec<Column> = seasonal
        .into_iter()
        .zip(SEASONAL_NAMES)
        .map(|(values, name)| Column {
            name: name.to_string(),
            kind: ColumnKind::SeasonalDummy,
            values,
        })
        .collect();
    let flag = |pred: &dyn Fn(f64) -> bool| -> Vec<f64> {
        target_growth
            .iter()
            .map(|&g| if pred(g) { 1.0 } else { 0.0 })
            .collect()
    };
    cols.push(Column {
        name: NEG_SHOCK_NAME.into(),
        kind: ColumnKind::ShockDummy,
        values: flag(&|g| g <= spec.neg_shock_threshold),
    });
    cols.push(Column {
        name: POS_SHOCK_NAME.into(),
        kind: ColumnKind::ShockDummy,
        values: flag(&|g| g >= spec.pos_shock_threshold),
    });
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Standardizes the continuous columns of `apply_to` with means and
/// (population) standard deviations computed on `train` alone.
///
/// `train` must end strictly before the last quarter of `apply_to`, so the
/// quarter being forecast never informs the scaling.
pub fn iterative_standardize(
    train: &SeriesFrame,
    apply_to: &SeriesFrame,
) -> Result<(SeriesFrame, Vec<ColumnStats>)> {
    let (Some(tr), Some(ap)) = (train.range(), apply_to.range()) else {
        return Err(Error::Shape("standardization on an empty frame".into()));
    };
    if tr.end >= ap.end {
        return Err(Error::Domain(format!(
            "training window ends {} but must precede the applied window end {}",
            tr.end, ap.end
        )));
    }
    let mut out = apply_to.clone();
    let mut stats = Vec::new();
    for col in out.columns_mut() {
        if col.kind != ColumnKind::Continuous {
            continue;
        }
        let src = train
            .column(&col.name)
            .ok_or_else(|| Error::Shape(format!("training frame lacks column `{}`", col.name)))?;
        let n = src.values.len() as f64;
        let mean = src.values.iter().sum::<f64>() / n;
        let var = src.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::Standardization(col.name.clone()));
        }
        for v in col.values.iter_mut() {
            *v = (*v - mean) / std;
        }
        stats.push(ColumnStats {
            name: col.name.clone(),
            mean,
            std,
        });
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::quarter::q;
    use proptest::prelude::*;

    #[test]
    fn deflate_examples() {
        assert_eq!(deflate_and_growth(&[100.0, 110.0], &[100.0, 100.0]).unwrap(), vec![10.0]);
        assert_eq!(deflate_and_growth(&[100.0, 110.0], &[100.0, 110.0]).unwrap(), vec![0.0]);
        let g = deflate_and_growth(&[100.0, 121.0], &[100.0, 110.0]).unwrap();
        assert!((g[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn deflate_errors() {
        assert!(matches!(
            deflate_and_growth(&[1.0, 2.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            deflate_and_growth(&[1.0, 2.0], &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn deflate_is_scale_invariant(
            vals in proptest::collection::vec(1.0f64..1000.0, 2..20),
            c in 0.01f64..100.0,
        ) {
            let defl: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
            let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
            let a = deflate_and_growth(&vals, &defl).unwrap();
            let b = deflate_and_growth(&scaled, &defl).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn aggregation_methods() {
        let m = [1.0, 2.0, 3.0];
        assert_eq!(aggregate_monthly(&m, Aggregation::Mean).unwrap(), vec![2.0]);
        assert_eq!(aggregate_monthly(&m, Aggregation::Sum).unwrap(), vec![6.0]);
        assert_eq!(aggregate_monthly(&m, Aggregation::EndOfPeriod).unwrap(), vec![3.0]);
        assert!(aggregate_monthly(&[1.0, 2.0], Aggregation::Sum).is_err());
    }

    #[test]
    fn forward_fill_cases() {
        let s = [Some(1.0), None, None, Some(4.0)];
        assert_eq!(
            forward_fill(&s, 9).unwrap(),
            FillOutcome::Filled(vec![1.0, 1.0, 1.0, 4.0])
        );
        let mut lead = vec![None; 10];
        lead.extend([Some(1.0), Some(2.0)]);
        assert_eq!(
            forward_fill(&lead, 9).unwrap(),
            FillOutcome::Removed { leading_gaps: 10 }
        );
        assert!(matches!(
            forward_fill(&[None, Some(2.0)], 9),
            Err(Error::Ingestion(_))
        ));
    }

    #[test]
    fn dummies() {
        let idx = [q(2019, 4), q(2020, 1), q(2020, 2), q(2020, 3)];
        let growth = [1.0, -3.0, 6.0, -2.5];
        let cols = build_dummies(&idx, &growth, &TransformSpec::default()).unwrap();
        assert_eq!(cols.len(), 5);
        // Q2 row → (0,1,0)
        assert_eq!(
            (cols[0].values[2], cols[1].values[2], cols[2].values[2]),
            (0.0, 1.0, 0.0)
        );
        for i in 0..idx.len() {
            let s: f64 = cols[..3].iter().map(|c| c.values[i]).sum();
            assert_eq!(s, if idx[i].quarter() == 4 { 0.0 } else { 1.0 });
        }
        assert_eq!(cols[3].values, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(cols[4].values, vec![0.0, 0.0, 1.0, 0.0]);
    }

    fn frame(index: Vec<QuarterIndex>, x: Vec<f64>, d: Vec<f64>) -> SeriesFrame {
        let n = index.len();
        SeriesFrame::new(
            index,
            vec![
                Column { name: "x".into(), kind: ColumnKind::Continuous, values: x },
                Column { name: "d".into(), kind: ColumnKind::ShockDummy, values: d },
                Column { name: "y".into(), kind: ColumnKind::Target, values: vec![0.0; n] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn standardize_examples() {
        let train = frame(vec![q(2000, 1), q(2000, 2)], vec![0.0, 2.0], vec![0.0, 1.0]);
        let apply = frame(
            vec![q(2000, 1), q(2000, 2), q(2000, 3)],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 1.0],
        );
        let (out, stats) = iterative_standardize(&train, &apply).unwrap();
        assert_eq!(out.column("x").unwrap().values, vec![-1.0, 0.0, 1.0]);
        assert_eq!(out.column("d").unwrap().values, vec![0.0, 1.0, 1.0]);
        assert_eq!(stats[0].mean, 1.0);
        assert_eq!(stats[0].std, 1.0);
    }

    #[test]
    fn standardize_rejects_zero_std_and_lookahead() {
        let train = frame(vec![q(2000, 1), q(2000, 2)], vec![3.0, 3.0], vec![0.0, 0.0]);
        let apply = frame(vec![q(2000, 3)], vec![1.0], vec![0.0]);
        assert!(matches!(
            iterative_standardize(&train, &apply),
            Err(Error::Standardization(c)) if c == "x"
        ));
        let late = frame(vec![q(2000, 3), q(2000, 4)], vec![0.0, 1.0], vec![0.0, 0.0]);
        assert!(iterative_standardize(&late, &apply).is_err());
    }

    #[test]
    fn standardize_ignores_poisoned_future() {
        let idx: Vec<_> = (0..8).map(|i| q(2000, 1).offset(i)).collect();
        let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let full = frame(idx.clone(), x.clone(), vec![0.0; 8]);
        let mut poisoned_x = x.clone();
        for v in &mut poisoned_x[6..] {
            *v = 1e9;
        }
        let poisoned = frame(idx.clone(), poisoned_x, vec![0.0; 8]);
        let train_end = q(2000, 1).offset(4);
        let test = q(2000, 1).offset(5);
        let run = |f: &SeriesFrame| {
            let upto = f.truncate_after(test);
            let train = upto.truncate_after(train_end);
            iterative_standardize(&train, &upto).unwrap().0
        };
        assert_eq!(run(&full), run(&poisoned));
    }
}
