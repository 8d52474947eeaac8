//! CSV and JSON report emission from a completed ledger.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::ledger::{RunLedger, EWA, META_EWA, WA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Metrics,
    Ratios,
    Intervals,
    Importance,
    Weights,
    Tests,
    Diagnostics,
    Forecasts,
}

impl ReportKind {
    pub const ALL: [ReportKind; 8] = [
        ReportKind::Metrics,
        ReportKind::Ratios,
        ReportKind::Intervals,
        ReportKind::Importance,
        ReportKind::Weights,
        ReportKind::Tests,
        ReportKind::Diagnostics,
        ReportKind::Forecasts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Metrics => "metrics",
            ReportKind::Ratios => "ratios",
            ReportKind::Intervals => "intervals",
            ReportKind::Importance => "importance",
            ReportKind::Weights => "weights",
            ReportKind::Tests => "tests",
            ReportKind::Diagnostics => "diagnostics",
            ReportKind::Forecasts => "forecasts",
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown report kind `{s}`")))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(header)?;
        Ok(Table { path, writer })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, rec: I) -> Result<()> {
        self.writer.write_record(rec.into_iter().collect::<Vec<_>>())?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

fn json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Report(format!("ledger has no {what}")))
}

/// Writes one report kind into `dir` and returns the files written.
pub fn write_report(ledger: &RunLedger, kind: ReportKind, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    match kind {
        ReportKind::Metrics => {
            if ledger.metrics.is_empty() {
                return Err(Error::Report("ledger has no metrics".into()));
            }
            let mut t = Table::create(dir, "metrics.csv", &["model", "period", "msfe", "rmsfe", "mafe", "n"])?;
            for r in &ledger.metrics {
                let m = &r.metrics;
                t.row([r.model.clone(), r.period.clone(), m.msfe.to_string(), m.rmsfe.to_string(), m.mafe.to_string(), m.n.to_string()])?;
            }
            files.push(t.finish()?);
            files.push(json(dir, "metrics.json", &ledger.metrics)?);
        }
        ReportKind::Ratios => {
            if ledger.ratios.is_empty() {
                return Err(Error::Report("ledger has no benchmark ratios".into()));
            }
            let mut t = Table::create(dir, "ratios.csv", &["model", "benchmark", "period", "rmsfe_ratio"])?;
            for r in &ledger.ratios {
                t.row([r.model.clone(), r.benchmark.clone(), r.period.clone(), r.rmsfe_ratio.to_string()])?;
            }
            files.push(t.finish()?);
            files.push(json(dir, "ratios.json", &ledger.ratios)?);
        }
        ReportKind::Intervals => {
            let missing: Vec<String> = ledger
                .records
                .iter()
                .filter(|r| r.interval.is_none())
                .map(|r| format!("{}@{}", r.model, r.test))
                .collect();
            if ledger.records.is_empty() || !missing.is_empty() {
                return Err(Error::Report(format!("prediction intervals missing for {}", missing.join(", "))));
            }
            let mut t = Table::create(dir, "intervals.csv", &["model", "quarter", "point", "lower", "upper", "actual"])?;
            for r in &ledger.records {
                let pi = r.interval.expect("checked above");
                t.row([r.model.clone(), r.test.to_string(), r.forecast.to_string(), pi.lower.to_string(), pi.upper.to_string(), r.actual.to_string()])?;
            }
            files.push(t.finish()?);
        }
        ReportKind::Importance => {
            if ledger.importance.is_empty() {
                return Err(Error::Report("ledger has no importance summaries".into()));
            }
            let mut t = Table::create(dir, "importance.csv", &["model", "period", "rank", "feature", "mean", "ci_range"])?;
            for s in &ledger.importance {
                for p in &s.periods {
                    for (rank, f) in p.top.iter().enumerate() {
                        let j = s.trajectory.features.iter().position(|x| *x == f.feature).expect("ranked feature exists");
                        let ci = p.ci_ranges.as_ref().map(|c| c[j]);
                        t.row([s.trajectory.model.clone(), p.period.clone(), (rank + 1).to_string(), f.feature.clone(), f.value.to_string(), opt(ci)])?;
                    }
                }
            }
            files.push(t.finish()?);
            let mut q = Table::create(dir, "importance_quarterly.csv", &["model", "feature", "quarter", "value"])?;
            for s in &ledger.importance {
                let tr = &s.trajectory;
                for (j, f) in tr.features.iter().enumerate() {
                    for (quarter, v) in tr.quarters.iter().zip(&tr.values) {
                        q.row([tr.model.clone(), f.clone(), quarter.to_string(), v[j].to_string()])?;
                    }
                }
            }
            files.push(q.finish()?);
            let mut sp = Table::create(dir, "spearman.csv", &["feature", "spearman"])?;
            for r in &ledger.spearman {
                sp.row([r.feature.clone(), opt(r.spearman)])?;
            }
            files.push(sp.finish()?);
            files.push(json(dir, "importance.json", &ledger.importance)?);
        }
        ReportKind::Weights => {
            let c = need(ledger.combination.as_ref(), "combination")?;
            let mut t = Table::create(dir, "weights.csv", &["scheme", "quarter", "model", "weight", "dominant"])?;
            for (scheme, traj) in [(WA, &c.wa.weights), (EWA, &c.ewa.weights), (META_EWA, &c.meta.effective)] {
                for (i, (quarter, w)) in traj.quarters.iter().zip(&traj.weights).enumerate() {
                    let dom = traj.dominant(i).unwrap_or_default();
                    for (m, v) in traj.models.iter().zip(w) {
                        t.row([scheme.to_string(), quarter.to_string(), m.clone(), v.to_string(), (m == dom).to_string()])?;
                    }
                }
            }
            files.push(t.finish()?);
            let mut mw = Table::create(dir, "meta_weights.csv", &["quarter", "eta", "weight"])?;
            for (quarter, w) in c.meta.effective.quarters.iter().zip(&c.meta.meta_weights) {
                for (eta, v) in c.meta.eta_grid.iter().zip(w) {
                    mw.row([quarter.to_string(), eta.to_string(), v.to_string()])?;
                }
            }
            files.push(mw.finish()?);
            files.push(json(dir, "weights.json", c)?);
        }
        ReportKind::Tests => {
            if ledger.tests.is_empty() {
                return Err(Error::Report("ledger has no predictive-ability tests".into()));
            }
            let mut t = Table::create(dir, "tests.csv", &["model", "benchmark", "intercept", "intercept_p", "wald", "wald_p", "degenerate"])?;
            for r in &ledger.tests {
                let g = &r.report;
                t.row([
                    r.model.clone(),
                    r.benchmark.clone(),
                    g.intercept.to_string(),
                    g.intercept_p.to_string(),
                    g.wald.to_string(),
                    g.wald_p.to_string(),
                    g.degenerate.to_string(),
                ])?;
            }
            files.push(t.finish()?);
            files.push(json(dir, "tests.json", &ledger.tests)?);
        }
        ReportKind::Diagnostics => {
            if ledger.diagnostics.is_empty() {
                return Err(Error::Report("ledger has no residual diagnostics".into()));
            }
            let mut t = Table::create(dir, "diagnostics.csv", &["model", "shapiro_w", "shapiro_p", "ljung_box_q", "ljung_box_p"])?;
            for r in &ledger.diagnostics {
                let sw = r.shapiro_wilk;
                let lb = r.ljung_box;
                t.row([
                    r.model.clone(),
                    opt(sw.map(|d| d.statistic)),
                    opt(sw.map(|d| d.pvalue)),
                    opt(lb.map(|d| d.statistic)),
                    opt(lb.map(|d| d.pvalue)),
                ])?;
            }
            files.push(t.finish()?);
            files.push(json(dir, "diagnostics.json", &ledger.diagnostics)?);
        }
        ReportKind::Forecasts => {
            let panel = need(ledger.forecasts.as_ref(), "forecasts")?;
            let path = dir.join("forecasts.csv");
            panel.write_csv(std::fs::File::create(&path)?)?;
            files.push(path);
            let path = dir.join("losses.csv");
            need(ledger.losses.as_ref(), "loss matrix")?.write_csv(std::fs::File::create(&path)?)?;
            files.push(path);
            let mut a = Table::create(dir, "actuals.csv", &["quarter", "actual"])?;
            for (q, v) in panel.quarters.iter().zip(&ledger.actuals) {
                a.row([q.to_string(), v.to_string()])?;
            }
            files.push(a.finish()?);
            if let Some(m) = &ledger.mcs {
                let mut t = Table::create(dir, "mcs.csv", &["model", "mcs_pvalue", "rank", "in_set"])?;
                let ranking = m.ranking();
                for (name, p) in m.models.iter().zip(&m.pvalues) {
                    let rank = ranking.iter().position(|r| r == name).map_or(0, |r| r + 1);
                    t.row([name.clone(), p.to_string(), rank.to_string(), m.contains(name).to_string()])?;
                }
                files.push(t.finish()?);
            }
        }
    }
    Ok(files)
}

/// Writes every report kind the ledger can support and returns the files.
/// Kinds whose inputs are absent (for example intervals when the bootstrap
/// was switched off) are skipped.
pub fn write_all_reports(ledger: &RunLedger, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for kind in ReportKind::ALL {
        match write_report(ledger, kind, dir) {
            Ok(f) => files.extend(f),
            Err(Error::Report(msg)) => log::warn!("skipping {kind} report: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(files)
}
