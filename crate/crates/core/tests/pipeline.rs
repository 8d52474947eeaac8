use std::fs;
use std::path::Path;

use nowcast_core::config::RunConfig;
use nowcast_core::data::ingest::write_quarterly_csv;
use nowcast_core::pipeline::{self, write_all_reports, RunLedger};
use nowcast_core::synthetic::{factor_panel, PanelSpec};

fn small_config(dir: &Path, models: &[&str]) -> RunConfig {
    let data = dir.join("panel.csv");
    if !data.exists() {
        write_quarterly_csv(&factor_panel(&PanelSpec::default()), fs::File::create(&data).unwrap()).unwrap();
    }
    let mut cfg = RunConfig::new(data, "gdp_growth");
    cfg.models = models.iter().map(|s| s.to_string()).collect();
    cfg.hpo.n_trials = 6;
    cfg.hpo.n_startup = 3;
    cfg.bootstrap.replicates = 40;
    cfg.mcs.replicates = 500;
    cfg
}

fn report_bytes(ledger: &RunLedger, dir: &Path) -> Vec<(String, Vec<u8>)> {
    fs::create_dir_all(dir).unwrap();
    let mut files: Vec<_> = write_all_reports(ledger, dir)
        .unwrap()
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &["RW", "AR", "Ridge", "PLSR"]);
    let a = pipeline::run(&cfg).unwrap();
    let b = pipeline::run(&cfg).unwrap();
    let ra = report_bytes(&a, &dir.path().join("a"));
    let rb = report_bytes(&b, &dir.path().join("b"));
    assert!(ra.len() >= 10);
    assert_eq!(ra, rb);
}

#[test]
fn single_model_combinations_reduce_to_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), &["Ridge"]);
    cfg.benchmark = "Ridge".into();
    let ledger = pipeline::run(&cfg).unwrap();
    let series = ledger.series();
    let model = &series.iter().find(|(n, _)| n == "Ridge").unwrap().1;
    for name in ["SA", "WA", "EWA"] {
        let (_, f) = series.iter().find(|(n, _)| n == name).unwrap();
        assert_eq!(f, model, "{name}");
    }
    // The meta layer mixes several identical aggregators with weights that
    // sum to one only up to rounding.
    let (_, meta) = series.iter().find(|(n, _)| n == "Meta-EWA").unwrap();
    for (a, b) in meta.iter().zip(model) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    let c = ledger.combination.as_ref().unwrap();
    assert!(c.wa.weights.weights.iter().all(|w| w == &vec![1.0]));
}

#[test]
fn cached_cells_reproduce_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), &["RW", "Ridge", "EN"]);
    cfg.cache_dir = Some(dir.path().join("cache"));
    let fresh = pipeline::run(&cfg).unwrap();
    let cached_files = fs::read_dir(dir.path().join("cache")).unwrap().count();
    assert_eq!(cached_files, 3 * fresh.splits.len());
    let again = pipeline::run(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&fresh).unwrap(), serde_json::to_string(&again).unwrap());
}

#[test]
fn ledger_round_trips_and_recombines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &["RW", "Ridge", "EN", "PCR"]);
    let ledger = pipeline::run(&cfg).unwrap();
    let path = dir.path().join("ledger.json");
    pipeline::save_ledger(&ledger, &path).unwrap();
    let mut loaded = pipeline::load_ledger(&path).unwrap();
    assert_eq!(serde_json::to_string(&loaded).unwrap(), serde_json::to_string(&ledger).unwrap());

    let mut narrow = cfg.clone();
    narrow.models = vec!["RW".into(), "EN".into()];
    loaded.recombine(&narrow).unwrap();
    assert_eq!(loaded.roster, vec!["RW", "EN"]);
    assert!(loaded.records.iter().all(|r| r.model == "RW" || r.model == "EN"));
    let en = |l: &RunLedger| l.metrics.iter().find(|m| m.model == "EN" && m.period == "Overall").unwrap().metrics;
    assert_eq!(en(&loaded), en(&ledger));
}

#[test]
fn failure_leaves_partial_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), &["RW", "Ridge"]);
    cfg.output_dir = dir.path().join("out");
    cfg.horizon.first_test = nowcast_core::data::q(1991, 1);
    assert!(pipeline::run(&cfg).is_err());
    assert!(cfg.output_dir.join("ledger.partial.json").exists());
}
