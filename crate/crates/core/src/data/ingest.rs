//! CSV ingestion: raw quarterly (and optional monthly) tables in, a clean
//! stationary frame plus an audit ledger out.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::adf::{adf_filter, ColumnScreen, DropReason};
use super::frame::{Column, ColumnKind, SeriesFrame};
use super::quarter::{QuarterIndex, QuarterRange};
use super::transform::{
    aggregate_monthly, build_dummies, deflate_and_growth, forward_fill, growth_rate, Aggregation,
    FillOutcome, TransformSpec,
};
use crate::error::{Error, Result};

/// Quarterly table as read from disk; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub index: Vec<QuarterIndex>,
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

fn parse_cell(s: &str, row: usize, col: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Ingestion(format!("row {row}, column `{col}`: cannot parse `{t}`")))
}

/// Reads a quarterly CSV whose first column is `quarter` (`YYYY Qn`).
pub fn read_quarterly_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::to_ascii_lowercase).as_deref() != Some("quarter") {
        return Err(Error::Ingestion("first CSV column must be `quarter`".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut index = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        index.push(rec[0].parse::<QuarterIndex>()?);
        for (j, name) in names.iter().enumerate() {
            cols[j].push(parse_cell(rec.get(j + 1).unwrap_or(""), r + 2, name)?);
        }
    }
    check_contiguous(&index)?;
    Ok(RawTable {
        index,
        columns: names.into_iter().zip(cols).collect(),
    })
}

fn check_contiguous(index: &[QuarterIndex]) -> Result<()> {
    for w in index.windows(2) {
        if w[1] != w[0].succ() {
            return Err(Error::Ingestion(format!(
                "quarters must be consecutive; found {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Reads a monthly CSV (`month` column as `YYYY-MM`) and aggregates each
/// series to quarters. A quarter with any missing month is missing.
pub fn read_monthly_csv<R: Read>(
    reader: R,
    methods: &BTreeMap<String, Aggregation>,
    default: Aggregation,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut months: Vec<(i32, u32)> = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let m = &rec[0];
        let bad = || Error::Ingestion(format!("cannot parse month `{m}` (expected YYYY-MM)"));
        let (y, mo) = m.split_once('-').ok_or_else(bad)?;
        let y: i32 = y.parse().map_err(|_| bad())?;
        let mo: u32 = mo.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&mo) {
            return Err(bad());
        }
        months.push((y, mo));
        for (j, name) in names.iter().enumerate() {
            cols[j].push(parse_cell(rec.get(j + 1).unwrap_or(""), r + 2, name)?);
        }
    }
    if months.is_empty() {
        return Err(Error::Ingestion("monthly file has no rows".into()));
    }
    if (months[0].1 - 1) % 3 != 0 {
        return Err(Error::Ingestion("monthly data must start on the first month of a quarter".into()));
    }
    for w in months.windows(2) {
        let next = if w[0].1 == 12 { (w[0].0 + 1, 1) } else { (w[0].0, w[0].1 + 1) };
        if w[1] != next {
            return Err(Error::Ingestion("monthly rows must be consecutive".into()));
        }
    }
    let full = months.len() / 3 * 3;
    let index: Vec<QuarterIndex> = months[..full]
        .chunks_exact(3)
        .map(|c| QuarterIndex::new(c[0].0, ((c[0].1 - 1) / 3 + 1) as u8))
        .collect::<Result<_>>()?;
    let mut columns = Vec::new();
    for (name, vals) in names.into_iter().zip(cols) {
        let method = methods.get(&name).copied().unwrap_or(default);
        let q: Vec<Option<f64>> = vals[..full]
            .chunks_exact(3)
            .map(|c| {
                if c.iter().all(Option::is_some) {
                    let v: Vec<f64> = c.iter().map(|v| v.unwrap()).collect();
                    aggregate_monthly(&v, method).map(|a| Some(a[0]))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        columns.push((name, q));
    }
    Ok(RawTable { index, columns })
}

impl RawTable {
    /// Outer-joins `other` on quarters, keeping this table's index.
    pub fn join(&mut self, other: RawTable) -> Result<()> {
        for (name, vals) in other.columns {
            if self.columns.iter().any(|(n, _)| *n == name) {
                return Err(Error::Ingestion(format!("duplicate column `{name}` in monthly data")));
            }
            let col = self
                .index
                .iter()
                .map(|q| {
                    other
                        .index
                        .iter()
                        .position(|o| o == q)
                        .and_then(|i| vals[i])
                })
                .collect();
            self.columns.push((name, col));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetTransform {
    /// The target column already holds percent growth.
    #[default]
    AsIs,
    /// The target column is a real level; growth is computed.
    Growth,
    /// The target is nominal and is deflated by the named column first.
    Deflate { deflator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySource {
    pub path: String,
    #[serde(default)]
    pub aggregation: BTreeMap<String, Aggregation>,
    #[serde(default = "default_aggregation")]
    pub default_aggregation: Aggregation,
}

fn default_aggregation() -> Aggregation {
    Aggregation::Mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub target: String,
    #[serde(default)]
    pub target_transform: TargetTransform,
    #[serde(default)]
    pub monthly: Option<MonthlySource>,
    #[serde(default, flatten)]
    pub transform: TransformSpec,
}

impl IngestConfig {
    pub fn new(target: impl Into<String>) -> Self {
        IngestConfig {
            target: target.into(),
            target_transform: TargetTransform::AsIs,
            monthly: None,
            transform: TransformSpec::default(),
        }
    }
}

/// Audit record of ingestion: every column decision and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestLedger {
    pub range: QuarterRange,
    pub rows: usize,
    pub target: String,
    pub screens: Vec<ColumnScreen>,
    pub dropped: Vec<ColumnScreen>,
    pub column_kinds: Vec<(String, ColumnKind)>,
}

/// Full ingestion: target transform, forward fill, ADF screening, dummies.
pub fn prepare(raw: &RawTable, cfg: &IngestConfig) -> Result<(SeriesFrame, IngestLedger)> {
    cfg.transform.validate()?;
    let get = |name: &str| -> Result<&Vec<Option<f64>>> {
        raw.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Ingestion(format!("column `{name}` not found")))
    };
    let dense = |name: &str| -> Result<Vec<f64>> {
        get(name)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::Ingestion(format!("column `{name}` is missing a value at {}", raw.index[i]))
                })
            })
            .collect()
    };
    let target_raw = dense(&cfg.target)?;
    let mut skip = vec![cfg.target.clone()];
    let (target, offset) = match &cfg.target_transform {
        TargetTransform::AsIs => (target_raw, 0),
        TargetTransform::Growth => (growth_rate(&target_raw), 1),
        TargetTransform::Deflate { deflator } => {
            skip.push(deflator.clone());
            (deflate_and_growth(&target_raw, &dense(deflator)?)?, 1)
        }
    };
    let index: Vec<QuarterIndex> = raw.index[offset..].to_vec();
    if index.is_empty() {
        return Err(Error::Ingestion("no rows after target transformation".into()));
    }

    let mut columns = Vec::new();
    let mut pre_dropped = Vec::new();
    for (name, vals) in raw.columns.iter().filter(|(n, _)| !skip.contains(n)) {
        match forward_fill(&vals[offset..], cfg.transform.forward_fill_limit)
            .map_err(|e| Error::Ingestion(format!("column `{name}`: {e}")))?
        {
            FillOutcome::Filled(values) => columns.push(Column {
                name: name.clone(),
                kind: ColumnKind::Continuous,
                values,
            }),
            FillOutcome::Removed { .. } => pre_dropped.push(ColumnScreen {
                column: name.clone(),
                retained: false,
                reason: Some(DropReason::LeadingGaps),
                adf: None,
            }),
        }
    }
    columns.push(Column {
        name: cfg.target.clone(),
        kind: ColumnKind::Target,
        values: target.clone(),
    });
    let frame = SeriesFrame::new(index.clone(), columns)?;
    let (mut frame, screens) = adf_filter(&frame, &cfg.transform)?;
    for c in build_dummies(&index, &target, &cfg.transform)? {
        frame.push_column(c)?;
    }
    let mut all_screens = pre_dropped;
    all_screens.extend(screens);
    let dropped = all_screens.iter().filter(|s| !s.retained).cloned().collect();
    let ledger = IngestLedger {
        range: frame.range().expect("nonempty"),
        rows: frame.n_rows(),
        target: cfg.target.clone(),
        screens: all_screens,
        dropped,
        column_kinds: frame.columns().iter().map(|c| (c.name.clone(), c.kind)).collect(),
    };
    Ok((frame, ledger))
}

/// Writes a raw table in the layout `read_quarterly_csv` accepts; missing
/// cells are left empty.
pub fn write_quarterly_csv<W: Write>(table: &RawTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["quarter".to_string()];
    header.extend(table.columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, q) in table.index.iter().enumerate() {
        let mut rec = vec![q.to_string()];
        rec.extend(table.columns.iter().map(|(_, v)| v[i].map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a frame as CSV with a leading `quarter` column.
pub fn write_frame_csv<W: Write>(frame: &SeriesFrame, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["quarter".to_string()];
    header.extend(frame.columns().iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (i, q) in frame.index().iter().enumerate() {
        let mut rec = vec![q.to_string()];
        rec.extend(frame.columns().iter().map(|c| c.values[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_gaps_and_rejects_bad_header() {
        let csv = "quarter,a,b\n2000 Q1,1,\n2000 Q2,,2\n";
        let t = read_quarterly_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.columns[0].1, vec![Some(1.0), None]);
        assert_eq!(t.columns[1].1, vec![None, Some(2.0)]);
        assert!(read_quarterly_csv("date,a\n2000 Q1,1\n".as_bytes()).is_err());
        assert!(read_quarterly_csv("quarter,a\n2000 Q1,1\n2000 Q3,2\n".as_bytes()).is_err());
        let mut out = Vec::new();
        write_quarterly_csv(&t, &mut out).unwrap();
        assert_eq!(read_quarterly_csv(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn monthly_aggregation_and_join() {
        let csv = "month,m\n2000-01,1\n2000-02,2\n2000-03,3\n2000-04,4\n2000-05,5\n2000-06,6\n";
        let mut methods = BTreeMap::new();
        methods.insert("m".to_string(), Aggregation::Sum);
        let t = read_monthly_csv(csv.as_bytes(), &methods, Aggregation::Mean).unwrap();
        assert_eq!(t.columns[0].1, vec![Some(6.0), Some(15.0)]);
        let mut base = read_quarterly_csv("quarter,a\n2000 Q1,1\n2000 Q2,2\n2000 Q3,3\n".as_bytes()).unwrap();
        base.join(t).unwrap();
        assert_eq!(base.columns[1].1, vec![Some(6.0), Some(15.0), None]);
    }

    #[test]
    fn prepare_drops_late_starters_and_adds_dummies() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let mut s = String::from("quarter,gdp,x,late\n");
        for i in 0..n {
            let q = crate::data::quarter::q(1990, 1).offset(i);
            let x: f64 = StandardNormal.sample(&mut rng);
            let g: f64 = StandardNormal.sample(&mut rng);
            let late = if i < 12 { String::new() } else { format!("{}", x * 0.5) };
            s.push_str(&format!("{q},{},{x},{late}\n", 2.0 * g));
        }
        let raw = read_quarterly_csv(s.as_bytes()).unwrap();
        let (frame, ledger) = prepare(&raw, &IngestConfig::new("gdp")).unwrap();
        assert!(frame.column("late").is_none());
        assert!(frame.column("x").is_some());
        assert_eq!(frame.features().filter(|c| c.kind.is_dummy()).count(), 5);
        assert!(ledger
            .dropped
            .iter()
            .any(|d| d.column == "late" && d.reason == Some(DropReason::LeadingGaps)));
    }
}
