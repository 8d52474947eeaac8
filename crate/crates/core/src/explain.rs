//! Importance aggregation over splits, top-k ranking and rank correlation.

use serde::{Deserialize, Serialize};

use crate::data::QuarterIndex;
use crate::error::{Error, Result};
use crate::learners::ImportanceKind;
use crate::stats::{average_ranks, pearson};
use crate::windows::Subperiod;

/// Per-split importance vectors of one model, stamped with test quarters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTrajectory {
    pub model: String,
    pub kind: ImportanceKind,
    pub features: Vec<String>,
    pub dummy: Vec<bool>,
    pub quarters: Vec<QuarterIndex>,
    /// `values[s][j]`: feature `j` at split `s`.
    pub values: Vec<Vec<f64>>,
}

impl ImportanceTrajectory {
    pub fn validate(&self) -> Result<()> {
        let p = self.features.len();
        if self.dummy.len() != p || self.quarters.len() != self.values.len() || self.values.iter().any(|v| v.len() != p) {
            return Err(Error::Shape(format!("importance trajectory for {} is ragged", self.model)));
        }
        Ok(())
    }

    /// The `(quarter, value)` path of one feature.
    pub fn feature_path(&self, name: &str) -> Option<Vec<(QuarterIndex, f64)>> {
        let j = self.features.iter().position(|f| f == name)?;
        Some(self.quarters.iter().zip(&self.values).map(|(q, v)| (*q, v[j])).collect())
    }
}

/// Mean of each feature over the splits whose test quarter is in `slice`.
pub fn aggregate(traj: &ImportanceTrajectory, slice: &Subperiod) -> Result<Vec<f64>> {
    traj.validate()?;
    let rows: Vec<&Vec<f64>> = traj
        .quarters
        .iter()
        .zip(&traj.values)
        .filter(|(q, _)| slice.contains(**q))
        .map(|(_, v)| v)
        .collect();
    if rows.is_empty() {
        return Err(Error::Aggregation(format!("no {} splits fall in {}", traj.model, slice.name)));
    }
    let n = rows.len() as f64;
    Ok((0..traj.features.len()).map(|j| rows.iter().map(|v| v[j]).sum::<f64>() / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub value: f64,
}

/// Top `k` non-dummy features: by |value| for signed measures, by value for
/// nonnegative ones. Ties go to the lexicographically smaller name.
pub fn top_k(features: &[String], values: &[f64], dummy: &[bool], kind: ImportanceKind, k: usize) -> Result<Vec<RankedFeature>> {
    if k == 0 {
        return Err(Error::Domain("top_k needs k >= 1".into()));
    }
    if features.len() != values.len() || features.len() != dummy.len() {
        return Err(Error::Shape("top_k inputs differ in length".into()));
    }
    let key = |v: f64| match kind {
        ImportanceKind::Signed => v.abs(),
        ImportanceKind::Nonnegative => v,
    };
    let mut idx: Vec<usize> = (0..features.len()).filter(|&j| !dummy[j]).collect();
    idx.sort_by(|&a, &b| key(values[b]).total_cmp(&key(values[a])).then_with(|| features[a].cmp(&features[b])));
    Ok(idx
        .into_iter()
        .take(k)
        .map(|j| RankedFeature { feature: features[j].clone(), value: values[j] })
        .collect())
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape("spearman inputs differ in length".into()));
    }
    if x.len() < 3 {
        return Err(Error::Domain("spearman needs at least three points".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let flat = |r: &[f64]| r.iter().all(|v| *v == r[0]);
    if flat(&rx) || flat(&ry) {
        return Err(Error::Degenerate("rank variance is zero, correlation undefined".into()));
    }
    Ok(pearson(&rx, &ry)?.clamp(-1.0, 1.0))
}
