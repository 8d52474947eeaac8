//! End-to-end orchestration: ingest, plan, per-split tuning and fitting,
//! then importance, MCS, combination and evaluation over the test horizon.

pub mod ledger;
pub mod report;
pub mod split;

use std::fs::File;
use std::path::Path;

use log::info;

pub use ledger::{CombinationLedger, DiagnosticRow, MetricRow, RatioRow, RunLedger, SpearmanRow, TestRow};
pub use report::{write_all_reports, write_report, ReportKind};
pub use split::{final_view, run_model_split, tuning_view, SplitData, SplitRecord};

use crate::config::RunConfig;
use crate::data::{prepare, read_quarterly_csv, ColumnKind, IngestLedger, SeriesFrame};
use crate::data::ingest::read_monthly_csv;
use crate::error::{Error, Result};
use crate::explain::spearman;
use crate::learners::ModelKind;
use crate::par::map_slice;
use crate::windows::{plan_walk_forward, SplitPlan};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))
}

/// Reads the configured files and runs the ingestion transforms.
pub fn ingest(cfg: &RunConfig) -> Result<(SeriesFrame, IngestLedger)> {
    let mut raw = read_quarterly_csv(open(&cfg.data)?)?;
    if let Some(m) = &cfg.ingest.monthly {
        raw.join(read_monthly_csv(open(Path::new(&m.path))?, &m.aggregation, m.default_aggregation)?)?;
    }
    prepare(&raw, &cfg.ingest)
}

pub fn plan(cfg: &RunConfig, frame: &SeriesFrame) -> Result<Vec<SplitPlan>> {
    let range = frame.range().ok_or_else(|| Error::Ingestion("no data rows".into()))?;
    plan_walk_forward(range, &cfg.horizon.horizon())
}

/// All (model, split) cells, in parallel, in model-major order.
pub fn run_splits(cfg: &RunConfig, frame: &SeriesFrame, splits: &[SplitPlan], roster: &[ModelKind]) -> Result<Vec<SplitRecord>> {
    let digest = cfg.digest()?;
    let cells: Vec<(ModelKind, usize)> = roster.iter().flat_map(|&m| (0..splits.len()).map(move |s| (m, s))).collect();
    let results = map_slice(&cells, |&(model, s)| -> Result<SplitRecord> {
        let key = match &cfg.cache_dir {
            Some(_) => Some(split::cache_key(digest, frame, model, &splits[s], s)?),
            None => None,
        };
        if let (Some(dir), Some(k)) = (&cfg.cache_dir, key) {
            if let Some(r) = split::load_cached(dir, k) {
                return Ok(r);
            }
        }
        let rec = run_model_split(cfg, model, s, &splits[s], frame)
            .map_err(|e| Error::Training(format!("{} at {}: {e}", model.name(), splits[s].test)))?;
        if let (Some(dir), Some(k)) = (&cfg.cache_dir, key) {
            split::store_cached(dir, k, &rec)?;
        }
        Ok(rec)
    });
    results.into_iter().collect()
}

/// Rank correlation of each continuous feature with the target.
pub fn spearman_table(frame: &SeriesFrame) -> Vec<SpearmanRow> {
    let y = &frame.target().values;
    frame
        .features()
        .filter(|c| c.kind == ColumnKind::Continuous)
        .map(|c| SpearmanRow { feature: c.name.clone(), spearman: spearman(&c.values, y).ok() })
        .collect()
}

/// Runs every stage on an already prepared frame, filling `ledger` as it
/// goes so a failure leaves the completed stages in place.
pub fn run_on_frame(cfg: &RunConfig, frame: &SeriesFrame, ledger: &mut RunLedger) -> Result<()> {
    cfg.validate()?;
    let roster = cfg.roster()?;
    ledger.config_digest = format!("{:016x}", cfg.digest()?);
    ledger.seed = cfg.seed;
    ledger.roster = roster.iter().map(|m| m.name().to_string()).collect();
    ledger.benchmark = cfg.benchmark_kind()?.name().to_string();
    ledger.horizon = Some(cfg.horizon.horizon());
    ledger.column_kinds = frame.features().map(|c| (c.name.clone(), c.kind)).collect();
    ledger.splits = plan(cfg, frame).map_err(|e| e.at_stage("plan"))?;
    info!("{} splits x {} models", ledger.splits.len(), roster.len());
    ledger.records = run_splits(cfg, frame, &ledger.splits, &roster).map_err(|e| e.at_stage("fit"))?;
    ledger.spearman = spearman_table(frame);
    ledger.finish(cfg)
}

/// Full run from the configured files. On failure the partial ledger is
/// written to `ledger.partial.json` in the output folder.
pub fn run(cfg: &RunConfig) -> Result<RunLedger> {
    let mut ledger = RunLedger::default();
    let result = ingest(cfg).map_err(|e| e.at_stage("ingest")).and_then(|(frame, il)| {
        ledger.ingest = Some(il);
        run_on_frame(cfg, &frame, &mut ledger)
    });
    match result {
        Ok(()) => Ok(ledger),
        Err(e) => {
            if std::fs::create_dir_all(&cfg.output_dir).is_ok() {
                let _ = save_ledger(&ledger, &cfg.output_dir.join("ledger.partial.json"));
            }
            Err(e)
        }
    }
}

pub fn save_ledger(ledger: &RunLedger, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(ledger)?)?;
    Ok(())
}

pub fn load_ledger(path: &Path) -> Result<RunLedger> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Report(format!("cannot read ledger {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
