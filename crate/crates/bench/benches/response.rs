use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use protolayer::{response_naive, Dissimilarity, PreparedPrototypes};
use protolayer_bench::prototypes_and_input;
use std::hint::black_box;

fn response(c: &mut Criterion) {
    let spec = Dissimilarity::Euclidean;
    let dim = 256;
    let mut group = c.benchmark_group("euclidean_response");
    for n in [1, 16, 256, 4096] {
        let (set, x) = prototypes_and_input(n, dim, n as u64);
        // Prototype norms are cached once; training amortizes this per batch.
        let prepared = PreparedPrototypes::new(&set, &spec, dim).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("naive", n), &x, |b, x| {
            b.iter(|| response_naive(black_box(x), &set, &spec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("efficient", n), &x, |b, x| {
            b.iter(|| prepared.response(black_box(x)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, response);
criterion_main!(benches);
