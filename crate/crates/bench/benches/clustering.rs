use criterion::{criterion_group, criterion_main, Criterion};
use divforge_bench::blob_matrix;
use divforge_core::clustering::{dbscan, density_cluster};

fn clustering(c: &mut Criterion) {
    let points = blob_matrix(20, 100, 8, 2);
    let mut group = c.benchmark_group("clustering");
    group.sample_size(10);
    group.bench_function("dbscan_2k_8d", |b| b.iter(|| dbscan(&points, 3.0, 5).unwrap()));
    group.bench_function("density_2k_8d", |b| b.iter(|| density_cluster(&points, 20).unwrap()));
    group.finish();
}

criterion_group!(benches, clustering);
criterion_main!(benches);
