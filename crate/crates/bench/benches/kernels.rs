use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use sheetqv_core::{
    generate_sheet, modulus_of_continuity, stream_replicate, weighted_qv_process, Grid, ModelSpec, ParamPoint,
    ScalarFn, SeedSpec, SheetRole,
};

fn seed(k: u64) -> SeedSpec {
    SeedSpec::new(2024, k, SheetRole::DrivingW)
}

fn sheet_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_sheet");
    for m in [64usize, 256, 1024] {
        group.throughput(Throughput::Elements((m * m) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            let grid = Grid::new(m).unwrap();
            b.iter(|| generate_sheet(grid, black_box(seed(0))));
        });
    }
    group.finish();
}

fn fused_replicate(c: &mut Criterion) {
    let model = ModelSpec::new(ScalarFn::Cos);
    let mut group = c.benchmark_group("stream_replicate");
    for n in [16usize, 32, 64] {
        let r = 16;
        group.throughput(Throughput::Elements((n * r * n * r) as u64));
        group.bench_with_input(BenchmarkId::new("cos_r16", n), &n, |b, &n| {
            b.iter(|| stream_replicate(&model, n, r, ParamPoint::UNIT, &seed(1)).unwrap());
        });
    }
    group.finish();
}

fn process_statistics(c: &mut Criterion) {
    let sheet = generate_sheet(Grid::new(128).unwrap(), seed(2));
    c.bench_function("weighted_qv_process/128", |b| {
        b.iter(|| weighted_qv_process(&ScalarFn::Cos, black_box(&sheet)).unwrap())
    });
    let x = weighted_qv_process(&ScalarFn::Cos, &sheet).unwrap();
    c.bench_function("modulus_of_continuity/128", |b| {
        b.iter(|| modulus_of_continuity(x.as_ref(), black_box(1.0 / 16.0)).unwrap())
    });
}

criterion_group!(benches, sheet_generation, fused_replicate, process_statistics);
criterion_main!(benches);
