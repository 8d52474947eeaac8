use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;

use nowcast_core::config::RunConfig;
use nowcast_core::data::ingest::{write_frame_csv, write_quarterly_csv};
use nowcast_core::data::prepare;
use nowcast_core::pipeline::{self, write_all_reports, write_report, ReportKind, RunLedger};
use nowcast_core::synthetic::{factor_panel, PanelSpec};
use nowcast_core::{Error, ErrorClass};

/// Walk-forward quarterly GDP nowcasting.
#[derive(Debug, Parser)]
#[command(name = "nowcast", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output folder; overrides `output_dir` from the config.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated model names to keep from the configured roster.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read and transform the input data; write the prepared frame and the ingest ledger.
    Ingest,
    /// Full pipeline: tuning, fitting, bootstrap, importance, MCS, combination, evaluation.
    Run,
    /// Rerun MCS, combination and evaluation on an existing ledger.
    Combine,
    /// Write reports from an existing ledger.
    Report {
        /// One of metrics, ratios, intervals, importance, weights, tests, diagnostics, forecasts.
        #[arg(long)]
        kind: Option<ReportKind>,
    },
    /// End-to-end run on a synthetic panel with a planted signal.
    Selftest {
        /// Walk-forward trials per (model, split).
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

const LEDGER: &str = "ledger.json";

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::class) {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Data) => 3,
        Some(ErrorClass::Numeric) => 4,
        Some(ErrorClass::Io) | None => 1,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let Some(path) = &cli.config else {
        return Err(Error::Config("--config is required for this command".into()).into());
    };
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(cli, &mut cfg)?;
    Ok(cfg)
}

fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) -> anyhow::Result<()> {
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if !cli.models.is_empty() {
        cfg.filter_roster(&cli.models)?;
    }
    cfg.validate()?;
    Ok(())
}

fn output_dir(cli: &Cli) -> anyhow::Result<PathBuf> {
    let dir = match (&cli.output, &cli.config) {
        (Some(o), _) => o.clone(),
        (None, Some(_)) => load_config(cli)?.output_dir,
        (None, None) => PathBuf::from("output"),
    };
    Ok(dir)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn finish_run(ledger: &RunLedger, dir: &Path) -> anyhow::Result<()> {
    create_dir(dir)?;
    pipeline::save_ledger(ledger, &dir.join(LEDGER))?;
    let written = write_all_reports(ledger, dir)?;
    info!("wrote {} report files to {}", written.len(), dir.display());
    Ok(())
}

fn ingest(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let (frame, ledger) = pipeline::ingest(&cfg)?;
    create_dir(&cfg.output_dir)?;
    write_frame_csv(&frame, File::create(cfg.output_dir.join("prepared.csv"))?)?;
    fs::write(cfg.output_dir.join("ingest.json"), serde_json::to_string_pretty(&ledger)?)?;
    println!(
        "{} rows, {} columns kept, {} dropped ({})",
        ledger.rows,
        frame.columns().len(),
        ledger.dropped.len(),
        ledger.range
    );
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let t = Instant::now();
    let ledger = pipeline::run(&cfg)?;
    finish_run(&ledger, &cfg.output_dir)?;
    print_summary(&ledger);
    println!("finished in {:.1?}; outputs in {}", t.elapsed(), cfg.output_dir.display());
    Ok(())
}

fn combine(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let mut ledger = pipeline::load_ledger(&cfg.output_dir.join(LEDGER))?;
    ledger.recombine(&cfg)?;
    finish_run(&ledger, &cfg.output_dir)?;
    print_summary(&ledger);
    Ok(())
}

fn report(cli: &Cli, kind: Option<ReportKind>) -> anyhow::Result<()> {
    let dir = output_dir(cli)?;
    let ledger = pipeline::load_ledger(&dir.join(LEDGER))?;
    let files = match kind {
        Some(k) => write_report(&ledger, k, &dir)?,
        None => write_all_reports(&ledger, &dir)?,
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn selftest(cli: &Cli, trials: usize) -> anyhow::Result<()> {
    let raw = factor_panel(&PanelSpec::default());
    let mut cfg = RunConfig::new("synthetic.csv", "gdp_growth");
    cfg.models = ["RW", "AR", "Ridge", "EN", "PCR", "PLSR"].iter().map(|s| s.to_string()).collect();
    cfg.hpo.n_trials = trials;
    cfg.hpo.n_startup = cfg.hpo.n_startup.min(trials);
    cfg.bootstrap.replicates = 200;
    cfg.mcs.replicates = 2000;
    apply_overrides(cli, &mut cfg)?;

    let t = Instant::now();
    let (frame, ingest_ledger) = prepare(&raw, &cfg.ingest)?;
    let mut ledger = RunLedger { ingest: Some(ingest_ledger), ..RunLedger::default() };
    pipeline::run_on_frame(&cfg, &frame, &mut ledger)?;
    print_summary(&ledger);
    println!("selftest finished in {:.1?}", t.elapsed());

    if let Some(dir) = &cli.output {
        create_dir(dir)?;
        write_quarterly_csv(&raw, File::create(dir.join("synthetic.csv"))?)?;
        let mut saved = cfg.clone();
        saved.output_dir = PathBuf::from(".");
        fs::write(dir.join("selftest.toml"), saved.to_toml()?)?;
        finish_run(&ledger, dir)?;
        println!("synthetic data, config and reports written to {}", dir.display());
    }

    let bench = ledger.benchmark.clone();
    for m in ["Ridge", "EN"] {
        let Some(r) = ledger.ratios.iter().find(|r| r.model == m && r.period == "Overall") else {
            continue;
        };
        if r.rmsfe_ratio >= 1.0 {
            bail!(Error::Numeric(format!("{m} failed to beat {bench} on planted signal (ratio {:.3})", r.rmsfe_ratio)));
        }
    }
    Ok(())
}

fn print_summary(ledger: &RunLedger) {
    println!("{:<10} {:>8} {:>8}", "model", "RMSFE", "ratio");
    for row in ledger.metrics.iter().filter(|r| r.period == "Overall") {
        let ratio = ledger
            .ratios
            .iter()
            .find(|r| r.model == row.model && r.period == "Overall")
            .map(|r| format!("{:.3}", r.rmsfe_ratio))
            .unwrap_or_else(|| "-".into());
        println!("{:<10} {:>8.3} {:>8}", row.model, row.metrics.rmsfe, ratio);
    }
    if let Some(m) = &ledger.mcs {
        println!("MCS survivors at {:.2}: {}", m.alpha, m.survivors.join(", "));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest => ingest(&cli),
        Command::Run => run(&cli),
        Command::Combine => combine(&cli),
        Command::Report { kind } => report(&cli, *kind),
        Command::Selftest { trials } => selftest(&cli, *trials),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Core errors already carry their cause in their message.
            match e.downcast_ref::<Error>() {
                Some(core) => eprintln!("error: {core}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
