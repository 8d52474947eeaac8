//! Model Confidence Set screening and forecast combination.

pub mod mcs;
pub mod weights;

pub use mcs::{mcs, McsConfig, McsResult, McsStatistic};
pub use weights::{
    combine_ewa, combine_meta_ewa, combine_sa, combine_wa, dominant_model, Combination, MetaEwa, WeightTrajectory,
    DEFAULT_ETA_GRID, DEFAULT_META_LAMBDA,
};

use serde::{Deserialize, Serialize};

use crate::data::QuarterIndex;
use crate::error::{Error, Result};

/// Quarter x model table; used for both forecasts and losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub quarters: Vec<QuarterIndex>,
    pub models: Vec<String>,
    /// `values[t][m]`.
    pub values: Vec<Vec<f64>>,
}

pub type LossMatrix = Panel;

impl Panel {
    pub fn new(quarters: Vec<QuarterIndex>, models: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let p = Panel { quarters, models, values };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.quarters.is_empty() {
            return Err(Error::Alignment("panel needs at least one quarter and one model".into()));
        }
        if self.values.len() != self.quarters.len() {
            return Err(Error::Alignment(format!(
                "{} rows for {} quarters",
                self.values.len(),
                self.quarters.len()
            )));
        }
        for (t, row) in self.values.iter().enumerate() {
            if row.len() != self.models.len() {
                return Err(Error::Alignment(format!("row {} has {} entries", self.quarters[t], row.len())));
            }
            if let Some(m) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Alignment(format!("missing {} value at {}", self.models[m], self.quarters[t])));
            }
        }
        Ok(())
    }

    pub fn n_quarters(&self) -> usize {
        self.quarters.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[m]).collect()
    }

    /// Keeps the named models, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Panel> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.models
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::Alignment(format!("model {n} not in panel")))
            })
            .collect::<Result<_>>()?;
        Ok(Panel {
            quarters: self.quarters.clone(),
            models: names.to_vec(),
            values: self.values.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    /// Squared errors against `actuals`.
    pub fn squared_errors(&self, actuals: &[f64]) -> Result<LossMatrix> {
        if actuals.len() != self.n_quarters() {
            return Err(Error::Alignment("actuals and forecasts differ in length".into()));
        }
        Ok(Panel {
            quarters: self.quarters.clone(),
            models: self.models.clone(),
            values: self
                .values
                .iter()
                .zip(actuals)
                .map(|(r, a)| r.iter().map(|f| (f - a) * (f - a)).collect())
                .collect(),
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["quarter".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header)?;
        for (q, row) in self.quarters.iter().zip(&self.values) {
            let mut rec = vec![q.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("quarter") {
            return Err(Error::Alignment("panel CSV must start with a `quarter` column".into()));
        }
        let models: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut quarters = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            quarters.push(rec[0].parse()?);
            values.push(
                rec.iter()
                    .skip(1)
                    .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Alignment(format!("bad value `{s}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Panel::new(quarters, models, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::q;

    #[test]
    fn csv_round_trip_and_checks() {
        let p = Panel::new(
            vec![q(2017, 1), q(2017, 2)],
            vec!["LASSO".into(), "Ridge".into()],
            vec![vec![0.1, 1.0 / 3.0], vec![-2.5, 1e-17]],
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(Panel::read_csv(buf.as_slice()).unwrap(), p);
        let sel = p.select(&["Ridge".into()]).unwrap();
        assert_eq!(sel.column(0), vec![1.0 / 3.0, 1e-17]);
        assert!(Panel::new(vec![q(2017, 1)], vec!["a".into()], vec![vec![f64::NAN]]).is_err());
        assert!(Panel::new(vec![q(2017, 1)], vec!["a".into()], vec![vec![1.0, 2.0]]).is_err());
        let loss = p.squared_errors(&[0.0, 0.0]).unwrap();
        assert_eq!(loss.values[1][0], 6.25);
    }
}
