use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cshc_bench::fixture;
use cshc_core::baselines::BaselineConfig;
use cshc_core::forest::{build_forest, CshcConfig};
use cshc_core::lp::{build_instance, solve, DEFAULT_GAMMA};
use cshc_core::selection::{CshcSelector, Strategy};
use cshc_core::{BaselineKind, RegionOfCompetence};

fn forest_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("forest_build");
    group.sample_size(10);
    for n in [500, 2000] {
        let (ds, cm) = fixture(n, 3);
        let cfg = CshcConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_forest(black_box(&cm), &ds, &cfg).unwrap())
        });
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let (ds, cm) = fixture(2000, 4);
    let forest = build_forest(&cm, &ds, &CshcConfig::default()).unwrap();
    let selector = CshcSelector::new(&forest, &cm);
    let queries: Vec<(Vec<f64>, Vec<usize>)> = (0..100)
        .map(|i| (ds.row(i).to_vec(), cm.predicted_row(i).to_vec()))
        .collect();
    let mut group = c.benchmark_group("select_100");
    for strategy in Strategy::ALL {
        group.bench_function(strategy.as_str(), |b| {
            b.iter(|| {
                for (i, (x, labels)) in queries.iter().enumerate() {
                    black_box(selector.select(strategy, i, x, labels).unwrap());
                }
            })
        });
    }
    let roc = RegionOfCompetence::new(&ds, cm.clone(), BaselineConfig::default()).unwrap();
    for kind in [BaselineKind::Ola, BaselineKind::KnoraU] {
        group.bench_function(kind.as_str(), |b| {
            b.iter(|| {
                for (x, labels) in &queries {
                    black_box(roc.select(kind, x, labels).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn lp_solve(c: &mut Criterion) {
    let (ds, cm) = fixture(2000, 5);
    let forest = build_forest(&cm, &ds, &CshcConfig::default()).unwrap();
    let bundle = forest.query(ds.row(0)).unwrap();
    let inst = build_instance(&bundle, &cm, DEFAULT_GAMMA);
    c.bench_function(&format!("lp_solve_{}_examples", inst.n_examples()), |b| {
        b.iter(|| solve(black_box(&inst)).unwrap())
    });
}

criterion_group!(benches, forest_build, selection, lp_solve);
criterion_main!(benches);
