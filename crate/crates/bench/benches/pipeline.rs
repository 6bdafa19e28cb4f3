use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hitl_bench::{accuracy_groups, ensemble_scores, manifest};
use hitl_core::simlab::{run_experiment, SimConfig};
use hitl_core::stats::{kruskal_wallis, shapiro_wilk};
use hitl_core::triage::{route, RoutingPolicy};
use std::hint::black_box;

fn statistics(c: &mut Criterion) {
    let mut group = c.benchmark_group("kruskal_wallis");
    for n in [20, 200, 2000] {
        let groups = accuracy_groups(2, n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &groups, |b, g| {
            b.iter(|| kruskal_wallis(black_box(g)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("shapiro_wilk");
    for n in [20, 200, 2000] {
        let sample = accuracy_groups(1, n, 2).remove(0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sample, |b, s| {
            b.iter(|| shapiro_wilk(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn triage(c: &mut Criterion) {
    let scores = ensemble_scores(8000, 3);
    let policy = RoutingPolicy::UncertainAll { tau: 0.5 };
    c.bench_function("route/8000", |b| b.iter(|| route(black_box(&scores), &policy).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let config = SimConfig::default();
    let pool = manifest(config.pairs_per_race);
    c.bench_function("run_experiment/default", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            run_experiment(&config, &pool, i).unwrap()
        })
    });
}

criterion_group!(benches, statistics, triage, simulation);
criterion_main!(benches);
