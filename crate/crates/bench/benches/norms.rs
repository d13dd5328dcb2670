use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rann::budgeted_index::admissible_distance_approx;
use rann::{tail, CostVector};
use rann_bench::vector;
use std::hint::black_box;

fn bench_tail(c: &mut Criterion) {
    let mut g = c.benchmark_group("tail");
    for d in [64, 1024] {
        let x = vector(d, 1);
        g.bench_with_input(BenchmarkId::new("k=d/16", d), &x, |b, x| {
            b.iter(|| tail(black_box(x), d / 16, 1.0).unwrap())
        });
    }
    g.finish();
}

fn bench_knapsack(c: &mut Criterion) {
    let mut g = c.benchmark_group("admissible_distance");
    let d = 64;
    let (a, q) = (vector(d, 2), vector(d, 3));
    let costs = CostVector::new((0..d).map(|i| 0.05 + 0.45 * ((i * 37 % d) as f64 / d as f64)).collect()).unwrap();
    for eps in [0.5, 0.1, 0.01] {
        g.bench_with_input(BenchmarkId::new("approx", eps), &eps, |b, &eps| {
            b.iter(|| admissible_distance_approx(black_box(&a), black_box(&q), &costs, eps).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_tail, bench_knapsack);
criterion_main!(benches);
