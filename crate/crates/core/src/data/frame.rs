use serde::{Deserialize, Serialize};

use super::quarter::{QuarterIndex, QuarterRange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    SeasonalDummy,
    ShockDummy,
    Target,
}

impl ColumnKind {
    pub fn is_dummy(self) -> bool {
        matches!(self, ColumnKind::SeasonalDummy | ColumnKind::ShockDummy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

/// Quarter-indexed matrix of features plus exactly one target column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    index: Vec<QuarterIndex>,
    columns: Vec<Column>,
}

impl SeriesFrame {
    /// Builds a frame and checks its invariants.
    pub fn new(index: Vec<QuarterIndex>, columns: Vec<Column>) -> Result<Self> {
        let frame = SeriesFrame { index, columns };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.index.len();
        for w in self.index.windows(2) {
            if w[1] != w[0].succ() {
                return Err(Error::Shape(format!(
                    "quarter index is not contiguous at {} → {}",
                    w[0], w[1]
                )));
            }
        }
        let mut targets = 0;
        for c in &self.columns {
            if c.values.len() != n {
                return Err(Error::Shape(format!(
                    "column `{}` has {} rows, index has {n}",
                    c.name,
                    c.values.len()
                )));
            }
            if c.kind.is_dummy() && c.values.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Domain(format!("dummy column `{}` has non-binary values", c.name)));
            }
            if c.kind == ColumnKind::Target {
                targets += 1;
            }
        }
        if targets != 1 {
            return Err(Error::Shape(format!("expected exactly one target column, found {targets}")));
        }
        Ok(())
    }

    pub fn index(&self) -> &[QuarterIndex] {
        &self.index
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn columns_mut(&mut self) -> &mut [Column] {
        &mut self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.index.len()
    }

    pub fn range(&self) -> Option<QuarterRange> {
        Some(QuarterRange {
            start: *self.index.first()?,
            end: *self.index.last()?,
        })
    }

    pub fn row_of(&self, quarter: QuarterIndex) -> Option<usize> {
        let first = *self.index.first()?;
        let d = first.distance_to(quarter);
        (d >= 0 && (d as usize) < self.index.len()).then_some(d as usize)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target(&self) -> &Column {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Target)
            .expect("validated frame has a target")
    }

    /// Non-target columns in frame order.
    pub fn features(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Target)
    }

    /// Rows whose quarter lies in `range` (clipped to the frame).
    pub fn slice(&self, range: QuarterRange) -> SeriesFrame {
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&i| range.contains(self.index[i]))
            .collect();
        self.select_rows(&keep)
    }

    /// Rows up to and including `last`.
    pub fn truncate_after(&self, last: QuarterIndex) -> SeriesFrame {
        let keep: Vec<usize> = (0..self.n_rows()).filter(|&i| self.index[i] <= last).collect();
        self.select_rows(&keep)
    }

    fn select_rows(&self, rows: &[usize]) -> SeriesFrame {
        SeriesFrame {
            index: rows.iter().map(|&i| self.index[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
        }
    }

    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if column.values.len() != self.n_rows() {
            return Err(Error::Shape(format!("column `{}` length mismatch", column.name)));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn drop_columns(&mut self, names: &[String]) {
        self.columns.retain(|c| !names.contains(&c.name));
    }
}
