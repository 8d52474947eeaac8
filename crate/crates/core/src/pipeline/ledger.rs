//! Run ledger and the cross-split stages that fill it: importance
//! aggregation, MCS, combination and evaluation.

use serde::{Deserialize, Serialize};

use super::split::SplitRecord;
use crate::combine::{
    combine_ewa, combine_meta_ewa, combine_sa, combine_wa, mcs, Combination, LossMatrix, McsResult, MetaEwa, Panel,
};
use crate::config::RunConfig;
use crate::data::{ColumnKind, IngestLedger, QuarterIndex};
use crate::error::{Error, Result};
use crate::evaluate::{giacomini_white, ljung_box, metrics, rmsfe_ratio, shapiro_wilk, Diagnostic, GwReport, MetricBundle};
use crate::explain::{aggregate, top_k, ImportanceTrajectory, RankedFeature};
use crate::learners::ModelKind;
use crate::windows::{Horizon, SplitPlan};

pub const SA: &str = "SA";
pub const WA: &str = "WA";
pub const EWA: &str = "EWA";
pub const META_EWA: &str = "Meta-EWA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub period: String,
    pub metrics: MetricBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub model: String,
    pub benchmark: String,
    pub period: String,
    pub rmsfe_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodImportance {
    pub period: String,
    pub means: Vec<f64>,
    /// Mean bootstrap CI width per feature, when intervals were computed.
    pub ci_ranges: Option<Vec<f64>>,
    pub top: Vec<RankedFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub trajectory: ImportanceTrajectory,
    pub periods: Vec<PeriodImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanRow {
    pub feature: String,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationLedger {
    pub models: Vec<String>,
    pub sa: Combination,
    pub wa: Combination,
    pub ewa_eta: f64,
    pub ewa: Combination,
    pub meta: MetaEwa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub model: String,
    pub benchmark: String,
    pub report: GwReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub model: String,
    pub shapiro_wilk: Option<Diagnostic>,
    pub ljung_box: Option<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLedger {
    pub config_digest: String,
    pub seed: u64,
    pub roster: Vec<String>,
    pub benchmark: String,
    pub horizon: Option<Horizon>,
    pub ingest: Option<IngestLedger>,
    pub column_kinds: Vec<(String, ColumnKind)>,
    pub splits: Vec<SplitPlan>,
    /// Model-major, split-minor.
    pub records: Vec<SplitRecord>,
    pub forecasts: Option<Panel>,
    pub actuals: Vec<f64>,
    pub losses: Option<LossMatrix>,
    pub importance: Vec<ImportanceSummary>,
    pub spearman: Vec<SpearmanRow>,
    pub mcs: Option<McsResult>,
    pub combination: Option<CombinationLedger>,
    pub metrics: Vec<MetricRow>,
    pub ratios: Vec<RatioRow>,
    pub tests: Vec<TestRow>,
    pub diagnostics: Vec<DiagnosticRow>,
}

impl RunLedger {
    pub fn record(&self, model: &str, split: usize) -> Option<&SplitRecord> {
        self.records.iter().find(|r| r.model == model && r.split == split)
    }

    /// Records of one split across models, in roster order.
    pub fn split_slice(&self, split: usize) -> Vec<&SplitRecord> {
        self.roster.iter().filter_map(|m| self.record(m, split)).collect()
    }

    pub fn quarters(&self) -> Vec<QuarterIndex> {
        self.splits.iter().map(|s| s.test).collect()
    }

    /// Forecast series of models and combinations, in report order.
    pub fn series(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        if let Some(p) = &self.forecasts {
            for (m, name) in p.models.iter().enumerate() {
                out.push((name.clone(), p.column(m)));
            }
        }
        if let Some(c) = &self.combination {
            out.push((SA.into(), c.sa.forecast.clone()));
            out.push((WA.into(), c.wa.forecast.clone()));
            out.push((EWA.into(), c.ewa.forecast.clone()));
            out.push((META_EWA.into(), c.meta.forecast.clone()));
        }
        out
    }

    /// Builds the forecast panel from the split records.
    pub fn assemble(&mut self) -> Result<()> {
        let quarters = self.quarters();
        let mut values = vec![vec![f64::NAN; self.roster.len()]; quarters.len()];
        let mut actuals = vec![f64::NAN; quarters.len()];
        let mut missing = Vec::new();
        for (m, name) in self.roster.iter().enumerate() {
            for (s, q) in quarters.iter().enumerate() {
                match self.record(name, s) {
                    Some(r) => {
                        values[s][m] = r.forecast;
                        actuals[s] = r.actual;
                    }
                    None => missing.push(format!("{name}@{q}")),
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Report(format!("ledger lacks forecasts for {}", missing.join(", "))));
        }
        let panel = Panel::new(quarters, self.roster.clone(), values)?;
        self.losses = Some(panel.squared_errors(&actuals)?);
        self.forecasts = Some(panel);
        self.actuals = actuals;
        Ok(())
    }

    /// Per-model importance trajectories and sub-period aggregates.
    pub fn explain(&mut self, top: usize) -> Result<()> {
        let horizon = self.horizon.clone().ok_or_else(|| Error::Report("ledger has no horizon".into()))?;
        let mut out = Vec::new();
        for name in &self.roster {
            let model: ModelKind = name.parse()?;
            let Some(kind) = model.importance_kind() else { continue };
            let recs: Vec<&SplitRecord> = (0..self.splits.len()).filter_map(|s| self.record(name, s)).collect();
            let Some(first) = recs.first() else { continue };
            let values: Option<Vec<Vec<f64>>> = recs.iter().map(|r| r.importance.clone()).collect();
            let Some(values) = values else { continue };
            let features = first.features.clone();
            let dummy = features.iter().map(|f| is_dummy_name(&self.column_kinds, f)).collect();
            let traj = ImportanceTrajectory {
                model: name.clone(),
                kind,
                features,
                dummy,
                quarters: recs.iter().map(|r| r.test).collect(),
                values,
            };
            traj.validate()?;
            let ranges: Option<Vec<Vec<f64>>> = recs
                .iter()
                .map(|r| r.importance_ci.as_ref().map(|ci| ci.iter().map(|c| c.range()).collect()))
                .collect();
            let mut periods = Vec::new();
            for sp in &horizon.subperiods {
                if !traj.quarters.iter().any(|q| sp.contains(*q)) {
                    continue;
                }
                let means = aggregate(&traj, sp)?;
                let ci_ranges = match &ranges {
                    Some(r) => Some(aggregate(&ImportanceTrajectory { values: r.clone(), ..traj.clone() }, sp)?),
                    None => None,
                };
                let ranked = top_k(&traj.features, &means, &traj.dummy, kind, top)?;
                periods.push(PeriodImportance { period: sp.name.clone(), means, ci_ranges, top: ranked });
            }
            out.push(ImportanceSummary { trajectory: traj, periods });
        }
        self.importance = out;
        Ok(())
    }

    pub fn select_models(&mut self, cfg: &RunConfig) -> Result<()> {
        let losses = self.losses.as_ref().ok_or_else(|| Error::Report("ledger has no loss matrix".into()))?;
        self.mcs = Some(mcs(losses, &cfg.mcs_config())?);
        Ok(())
    }

    pub fn combine(&mut self, cfg: &RunConfig) -> Result<()> {
        let panel = self.forecasts.as_ref().ok_or_else(|| Error::Report("ledger has no forecasts".into()))?;
        let models = match (&self.mcs, cfg.combine.use_mcs) {
            (Some(m), true) => self.roster.iter().filter(|r| m.contains(r)).cloned().collect(),
            _ => self.roster.clone(),
        };
        let sel = panel.select(&models)?;
        let y = &self.actuals;
        self.combination = Some(CombinationLedger {
            models,
            sa: combine_sa(&sel)?,
            wa: combine_wa(&sel, y)?,
            ewa_eta: cfg.combine.ewa_eta,
            ewa: combine_ewa(&sel, y, cfg.combine.ewa_eta)?,
            meta: combine_meta_ewa(&sel, y, &cfg.combine.eta_grid, cfg.combine.meta_lambda)?,
        });
        Ok(())
    }

    pub fn evaluate(&mut self) -> Result<()> {
        let horizon = self.horizon.clone().ok_or_else(|| Error::Report("ledger has no horizon".into()))?;
        let quarters = self.quarters();
        let series = self.series();
        let bench = series
            .iter()
            .find(|(n, _)| *n == self.benchmark)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Report(format!("benchmark {} has no forecasts", self.benchmark)))?;
        let (mut rows, mut ratios, mut tests, mut diags) = (vec![], vec![], vec![], vec![]);
        for sp in &horizon.subperiods {
            let idx: Vec<usize> = (0..quarters.len()).filter(|&t| sp.contains(quarters[t])).collect();
            if idx.is_empty() {
                continue;
            }
            let pick = |v: &[f64]| idx.iter().map(|&t| v[t]).collect::<Vec<f64>>();
            let actual = pick(&self.actuals);
            let bm = metrics(&pick(&bench), &actual)?;
            for (name, f) in &series {
                let m = metrics(&pick(f), &actual)?;
                if *name != self.benchmark {
                    if let Ok(r) = rmsfe_ratio(&m, &bm) {
                        ratios.push(RatioRow { model: name.clone(), benchmark: self.benchmark.clone(), period: sp.name.clone(), rmsfe_ratio: r });
                    }
                }
                rows.push(MetricRow { model: name.clone(), period: sp.name.clone(), metrics: m });
            }
        }
        let sq = |f: &[f64]| f.iter().zip(&self.actuals).map(|(a, b)| (a - b).powi(2)).collect::<Vec<f64>>();
        let bench_loss = sq(&bench);
        for (name, f) in &series {
            let resid: Vec<f64> = self.actuals.iter().zip(f).map(|(a, b)| a - b).collect();
            diags.push(DiagnosticRow {
                model: name.clone(),
                shapiro_wilk: shapiro_wilk(&resid).ok(),
                ljung_box: ljung_box(&resid, 4).ok(),
            });
            if *name != self.benchmark && f.len() >= 8 {
                tests.push(TestRow {
                    model: name.clone(),
                    benchmark: self.benchmark.clone(),
                    report: giacomini_white(&sq(f), &bench_loss, crate::evaluate::DEFAULT_MAX_LAG)?,
                });
            }
        }
        self.metrics = rows;
        self.ratios = ratios;
        self.tests = tests;
        self.diagnostics = diags;
        Ok(())
    }

    /// Restricts the ledger to the configured roster and reruns every stage
    /// after the split loop. Split records are reused as they are.
    pub fn recombine(&mut self, cfg: &RunConfig) -> Result<()> {
        let keep: Vec<String> = cfg.roster()?.iter().map(|m| m.name().to_string()).collect();
        self.roster.retain(|m| keep.contains(m));
        if self.roster.is_empty() {
            return Err(Error::Config("none of the configured models appear in the ledger".into()));
        }
        let roster = self.roster.clone();
        self.records.retain(|r| roster.contains(&r.model));
        self.seed = cfg.seed;
        self.finish(cfg)
    }

    /// Every stage after the split loop, in order.
    pub fn finish(&mut self, cfg: &RunConfig) -> Result<()> {
        self.assemble().map_err(|e| e.at_stage("assemble"))?;
        self.explain(cfg.top_k).map_err(|e| e.at_stage("explain"))?;
        self.select_models(cfg).map_err(|e| e.at_stage("mcs"))?;
        self.combine(cfg).map_err(|e| e.at_stage("combine"))?;
        self.evaluate().map_err(|e| e.at_stage("evaluate"))
    }
}

fn is_dummy_name(kinds: &[(String, ColumnKind)], feature: &str) -> bool {
    kinds.iter().find(|(n, _)| n == feature).is_some_and(|(_, k)| k.is_dummy())
}
