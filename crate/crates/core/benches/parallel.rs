use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nowcast_core::bootstrap::{run_replicates, BootstrapConfig, BootstrapTask, BreakSchedule};
use nowcast_core::combine::{mcs, McsConfig, Panel};
use nowcast_core::data::{prepare, q, IngestConfig, QuarterIndex};
use nowcast_core::learners::linear::PenalizedLearner;
use nowcast_core::learners::Dataset;
use nowcast_core::synthetic::{factor_panel, normal_draws, PanelSpec};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn bootstrap(c: &mut Criterion) {
    let frame = prepare(&factor_panel(&PanelSpec::default()), &IngestConfig::new("gdp_growth")).unwrap().0;
    let data = Dataset::from_frame(&frame).unwrap();
    let rows: Vec<usize> = (0..100).collect();
    let quarters: Vec<QuarterIndex> = frame.index()[..100].to_vec();
    let task = BootstrapTask {
        data: &data,
        fit_rows: &rows,
        fit_quarters: &quarters,
        test_row: 100,
        importance_rows: None,
        epochs: None,
    };
    let learner = PenalizedLearner::enet(0.05, 0.5);
    let cfg = BootstrapConfig { replicates: 200, ..BootstrapConfig::default() };
    let breaks = BreakSchedule::default();

    let mut group = c.benchmark_group("bootstrap_enet_200");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| black_box(run_replicates(&learner, &task, &breaks, &cfg).unwrap())))
        });
    }
    group.finish();
}

fn model_confidence_set(c: &mut Criterion) {
    let (n, k) = (26, 8);
    let draws = normal_draws(9, n * k);
    let values = (0..n).map(|t| (0..k).map(|m| draws[t * k + m].powi(2) + 0.05 * m as f64).collect()).collect();
    let quarters = (0..n as i64).map(|i| q(2017, 1).offset(i)).collect();
    let models = (0..k).map(|m| format!("M{m}")).collect();
    let losses = Panel::new(quarters, models, values).unwrap();
    let cfg = McsConfig { replicates: 2000, ..McsConfig::default() };

    let mut group = c.benchmark_group("mcs_8x26");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| black_box(mcs(&losses, &cfg).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap, model_confidence_set);
criterion_main!(benches);
