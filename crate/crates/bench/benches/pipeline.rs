use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dcqe_core::analysis::estimate_visibility;
use dcqe_core::coincidence::build_fringes;
use dcqe_core::events::{default_distribution, simulate_with};
use dcqe_core::{match_coincidences, nominal_offsets, Apparatus, ApparatusConfig, DetectorId, SimOptions};

fn apparatus() -> Apparatus {
    Apparatus::validate(ApparatusConfig::default()).unwrap()
}

fn distribution(c: &mut Criterion) {
    let app = apparatus();
    c.bench_function("joint distribution build (200 bins)", |b| b.iter(|| default_distribution(black_box(&app))));
}

fn simulation(c: &mut Criterion) {
    let app = apparatus();
    let dist = default_distribution(&app);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for n in [100_000usize, 1_000_000] {
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| simulate_with(&dist, n, 7, &SimOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn matching(c: &mut Criterion) {
    let app = apparatus();
    let streams = simulate_with(&default_distribution(&app), 1_000_000, 7, &SimOptions::default()).unwrap();
    let offsets = nominal_offsets(&app);
    let mut g = c.benchmark_group("coincidence");
    g.sample_size(10);
    g.throughput(Throughput::Elements(streams.d0.len() as u64));
    g.bench_function("match 1e6 pairs", |b| {
        b.iter(|| match_coincidences(&streams, app.config().coincidence_window, &offsets).unwrap())
    });
    g.finish();
}

fn fitting(c: &mut Criterion) {
    let app = apparatus();
    let streams = simulate_with(&default_distribution(&app), 200_000, 7, &SimOptions::default()).unwrap();
    let records = match_coincidences(&streams, app.config().coincidence_window, &nominal_offsets(&app)).unwrap();
    let fringes = build_fringes(&records, &app);
    c.bench_function("histogram 2e5 records", |b| b.iter(|| build_fringes(black_box(&records), &app)));
    c.bench_function("visibility fit (200 bins)", |b| {
        b.iter(|| estimate_visibility(black_box(fringes.get(DetectorId::D1))).unwrap())
    });
}

criterion_group!(benches, distribution, simulation, matching, fitting);
criterion_main!(benches);
