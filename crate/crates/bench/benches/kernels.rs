use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use heatlab_bench::field;
use heatlab_core::heat::{heat_kernel_column, HeatOptions};
use heatlab_core::metric::{intrinsic_distance_map, Neighborhood};
use heatlab_core::operator::assemble_generator;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for cells in [64, 128] {
        let f = field(cells, 1);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &f, |b, f| {
            b.iter(|| assemble_generator(f).unwrap())
        });
    }
    group.finish();
}

fn heat(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_column");
    group.sample_size(10);
    for cells in [32, 64] {
        let f = field(cells, 2);
        let gen = assemble_generator(&f).unwrap();
        let x0 = f.grid().index([cells / 2, cells / 2, 0]);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &gen, |b, gen| {
            b.iter(|| heat_kernel_column(gen, x0, &[1.0], HeatOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn dijkstra(c: &mut Criterion) {
    let mut group = c.benchmark_group("dijkstra");
    for cells in [64, 128] {
        let f = field(cells, 3);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &f, |b, f| {
            b.iter(|| intrinsic_distance_map(f, 0, Neighborhood::N16).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, heat, dijkstra);
criterion_main!(benches);
