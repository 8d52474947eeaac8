//! Walk-forward split planning, shock-dummy neutralization and sub-period
//! slicing.

use serde::{Deserialize, Serialize};

use crate::data::{q, ColumnKind, QuarterIndex, QuarterRange, SeriesFrame};
use crate::error::{Error, Result};

pub const VALIDATION_QUARTERS: usize = 12;

/// One walk-forward iteration: expanding train block, fixed-length
/// validation window, one test quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: QuarterRange,
    pub validation: QuarterRange,
    pub test: QuarterIndex,
}

impl SplitPlan {
    pub fn train_and_validation(&self) -> QuarterRange {
        QuarterRange {
            start: self.train.start,
            end: self.validation.end,
        }
    }
}

/// A named set of test quarters, stored as a union of intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subperiod {
    pub name: String,
    pub ranges: Vec<QuarterRange>,
}

impl Subperiod {
    pub fn contains(&self, quarter: QuarterIndex) -> bool {
        self.ranges.iter().any(|r| r.contains(quarter))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub first_test: QuarterIndex,
    pub last_test: QuarterIndex,
    #[serde(default = "default_val_len")]
    pub validation_quarters: usize,
    pub subperiods: Vec<Subperiod>,
}

fn default_val_len() -> usize {
    VALIDATION_QUARTERS
}

pub const OVERALL: &str = "Overall";
pub const PRE_COVID: &str = "Pre-COVID";
pub const COVID: &str = "COVID";
pub const POST_COVID: &str = "Post-COVID";
pub const EXCLUDING_COVID: &str = "Excluding-COVID";

impl Default for Horizon {
    fn default() -> Self {
        Horizon::with_covid(q(2017, 1), q(2023, 2), q(2020, 1), q(2020, 4))
    }
}

impl Horizon {
    /// Overall horizon with Pre/COVID/Post and Excluding-COVID slices. The
    /// COVID window is clipped to the horizon.
    pub fn with_covid(
        first_test: QuarterIndex,
        last_test: QuarterIndex,
        covid_start: QuarterIndex,
        covid_end: QuarterIndex,
    ) -> Self {
        let overall = QuarterRange { start: first_test, end: last_test };
        let mut subperiods = vec![Subperiod { name: OVERALL.into(), ranges: vec![overall] }];
        let cs = covid_start.max(first_test);
        let ce = covid_end.min(last_test);
        let mut pre = Vec::new();
        let mut post = Vec::new();
        let mut covid = Vec::new();
        if cs <= ce {
            covid.push(QuarterRange { start: cs, end: ce });
            if first_test < cs {
                pre.push(QuarterRange { start: first_test, end: cs.pred() });
            }
            if ce < last_test {
                post.push(QuarterRange { start: ce.succ(), end: last_test });
            }
        } else if last_test < covid_start {
            pre.push(overall);
        } else {
            post.push(overall);
        }
        let excluding: Vec<QuarterRange> = pre.iter().chain(&post).copied().collect();
        subperiods.push(Subperiod { name: PRE_COVID.into(), ranges: pre });
        subperiods.push(Subperiod { name: COVID.into(), ranges: covid });
        subperiods.push(Subperiod { name: POST_COVID.into(), ranges: post });
        subperiods.push(Subperiod { name: EXCLUDING_COVID.into(), ranges: excluding });
        Horizon {
            first_test,
            last_test,
            validation_quarters: VALIDATION_QUARTERS,
            subperiods,
        }
    }

    pub fn overall(&self) -> QuarterRange {
        QuarterRange { start: self.first_test, end: self.last_test }
    }

    pub fn subperiod(&self, name: &str) -> Result<&Subperiod> {
        self.subperiods
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSubperiod(name.to_string()))
    }
}

/// One split per test quarter of the horizon, each with an expanding train
/// block starting at the data start and a validation window immediately
/// preceding the test quarter.
pub fn plan_walk_forward(data: QuarterRange, horizon: &Horizon) -> Result<Vec<SplitPlan>> {
    if horizon.last_test < horizon.first_test {
        return Err(Error::Planning("horizon ends before it starts".into()));
    }
    let val = horizon.validation_quarters as i64;
    if val < 1 {
        return Err(Error::Planning("validation window must have at least one quarter".into()));
    }
    if data.start.distance_to(horizon.first_test) < val + 1 {
        return Err(Error::Planning(format!(
            "data starting {} leaves fewer than {} quarters before the first test quarter {}",
            data.start,
            val + 1,
            horizon.first_test
        )));
    }
    if data.end < horizon.last_test {
        return Err(Error::Planning(format!(
            "data end {} precedes the last test quarter {}",
            data.end, horizon.last_test
        )));
    }
    Ok(horizon
        .overall()
        .iter()
        .map(|test| SplitPlan {
            train: QuarterRange { start: data.start, end: test.offset(-val - 1) },
            validation: QuarterRange { start: test.offset(-val), end: test.pred() },
            test,
        })
        .collect())
}

/// Zeroes shock dummies on the last validation quarter and the test quarter.
pub fn neutralize_shock_dummies(frame: &SeriesFrame, split: &SplitPlan) -> SeriesFrame {
    let rows: Vec<usize> = [split.validation.end, split.test]
        .iter()
        .filter_map(|&qi| frame.row_of(qi))
        .collect();
    let mut out = frame.clone();
    for col in out.columns_mut() {
        if col.kind == ColumnKind::ShockDummy {
            for &r in &rows {
                col.values[r] = 0.0;
            }
        }
    }
    out
}

/// Anything stamped with the quarter it forecasts.
pub trait Quartered {
    fn quarter(&self) -> QuarterIndex;
}

impl Quartered for SplitPlan {
    fn quarter(&self) -> QuarterIndex {
        self.test
    }
}

impl Quartered for QuarterIndex {
    fn quarter(&self) -> QuarterIndex {
        *self
    }
}

/// Records whose quarter falls in the named sub-period.
pub fn slice_subperiod<'a, T: Quartered>(
    records: &'a [T],
    horizon: &Horizon,
    name: &str,
) -> Result<Vec<&'a T>> {
    let sp = horizon.subperiod(name)?;
    Ok(records.iter().filter(|r| sp.contains(r.quarter())).collect())
}

/// Writes the split enumeration as CSV for audit.
pub fn write_splits_csv<W: std::io::Write>(splits: &[SplitPlan], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["split", "train_start", "train_end", "val_start", "val_end", "test"])?;
    for (i, s) in splits.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.train.start.to_string(),
            s.train.end.to_string(),
            s.validation.start.to_string(),
            s.validation.end.to_string(),
            s.test.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnKind};

    fn default_plan() -> Vec<SplitPlan> {
        let data = QuarterRange { start: q(1990, 1), end: q(2023, 2) };
        plan_walk_forward(data, &Horizon::default()).unwrap()
    }

    #[test]
    fn default_horizon_has_26_splits() {
        let plan = default_plan();
        assert_eq!(plan.len(), 26);
        let first = plan[0];
        assert_eq!(first.test, q(2017, 1));
        assert_eq!(first.validation, QuarterRange { start: q(2014, 1), end: q(2016, 4) });
        assert_eq!(first.train.end, q(2013, 4));
        assert_eq!(first.train_and_validation().end, q(2016, 4));
    }

    #[test]
    fn consecutive_splits_expand_and_overlap() {
        let plan = default_plan();
        for w in plan.windows(2) {
            assert_eq!(w[1].train.end, w[0].train.end.succ());
            assert_eq!(w[1].train.start, w[0].train.start);
            let overlap = w[0].validation.iter().filter(|qi| w[1].validation.contains(*qi)).count();
            assert_eq!(overlap, 11);
        }
        for s in &plan {
            assert_eq!(s.validation.len(), 12);
            assert_eq!(s.validation.end.succ(), s.test);
            assert_eq!(s.train.end.succ(), s.validation.start);
        }
    }

    #[test]
    fn single_quarter_horizon() {
        let h = Horizon::with_covid(q(2018, 2), q(2018, 2), q(2020, 1), q(2020, 4));
        let data = QuarterRange { start: q(1990, 1), end: q(2023, 2) };
        assert_eq!(plan_walk_forward(data, &h).unwrap().len(), 1);
    }

    #[test]
    fn insufficient_history_is_rejected() {
        let data = QuarterRange { start: q(2014, 1), end: q(2023, 2) };
        assert!(matches!(plan_walk_forward(data, &Horizon::default()), Err(Error::Planning(_))));
        let data = QuarterRange { start: q(2013, 4), end: q(2023, 2) };
        assert_eq!(plan_walk_forward(data, &Horizon::default()).unwrap()[0].train.len(), 1);
    }

    #[test]
    fn subperiod_slices() {
        let plan = default_plan();
        let h = Horizon::default();
        assert_eq!(slice_subperiod(&plan, &h, OVERALL).unwrap().len(), 26);
        assert_eq!(slice_subperiod(&plan, &h, COVID).unwrap().len(), 4);
        assert_eq!(slice_subperiod(&plan, &h, EXCLUDING_COVID).unwrap().len(), 22);
        let pre = slice_subperiod(&plan, &h, PRE_COVID).unwrap().len();
        let post = slice_subperiod(&plan, &h, POST_COVID).unwrap().len();
        assert_eq!((pre, post), (12, 10));
        assert!(matches!(slice_subperiod(&plan, &h, "Nope"), Err(Error::UnknownSubperiod(_))));
        for s in &plan {
            let hits = [PRE_COVID, COVID, POST_COVID]
                .iter()
                .filter(|n| h.subperiod(n).unwrap().contains(s.test))
                .count();
            assert_eq!(hits, 1);
            assert_eq!(
                h.subperiod(EXCLUDING_COVID).unwrap().contains(s.test),
                !h.subperiod(COVID).unwrap().contains(s.test)
            );
        }
    }

    #[test]
    fn neutralization_rules() {
        let plan = default_plan();
        let split = plan[0];
        let idx: Vec<QuarterIndex> = QuarterRange { start: q(1990, 1), end: q(2023, 2) }.iter().collect();
        let n = idx.len();
        let frame = SeriesFrame::new(
            idx,
            vec![
                Column { name: "neg".into(), kind: ColumnKind::ShockDummy, values: vec![1.0; n] },
                Column { name: "s1".into(), kind: ColumnKind::SeasonalDummy, values: vec![1.0; n] },
                Column { name: "y".into(), kind: ColumnKind::Target, values: vec![0.0; n] },
            ],
        )
        .unwrap();
        let out = neutralize_shock_dummies(&frame, &split);
        let neg = &out.column("neg").unwrap().values;
        let test_row = out.row_of(split.test).unwrap();
        let last_val = out.row_of(split.validation.end).unwrap();
        assert_eq!(neg[test_row], 0.0);
        assert_eq!(neg[last_val], 0.0);
        assert_eq!(neg[last_val - 1], 1.0); // 11th validation quarter
        assert_eq!(neg[out.row_of(split.validation.start).unwrap()], 1.0);
        assert!(out.column("s1").unwrap().values.iter().all(|&v| v == 1.0));
        assert_eq!(neutralize_shock_dummies(&out, &split), out);
    }
}
