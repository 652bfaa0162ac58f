use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use scenlib_bench::{blobs, braking_cutin, normal_samples, symbols};
use scenlib_core::analyze::kmeans;
use scenlib_core::cleanse::dl_distance;
use scenlib_core::density::{kde_eval, kde_fit, Bandwidth, Kernel};
use scenlib_core::simharness::{simulate, AebPolicy};

fn bench_dl(c: &mut Criterion) {
    let mut g = c.benchmark_group("dl_distance");
    for len in [16, 64, 256] {
        let (a, b) = (symbols(len, 8, 1), symbols(len, 8, 2));
        g.bench_with_input(BenchmarkId::from_parameter(len), &len, |bch, _| {
            bch.iter(|| dl_distance(black_box(&a), black_box(&b)))
        });
    }
    g.finish();
}

fn bench_kde(c: &mut Criterion) {
    let mut g = c.benchmark_group("kde_eval");
    for n in [100, 10_000] {
        let xs = normal_samples(n, 3);
        for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let m = kde_fit(&xs, kernel, Bandwidth::Silverman).unwrap();
            g.bench_function(format!("{kernel}/{n}"), |bch| bch.iter(|| kde_eval(&m, black_box(0.3))));
        }
    }
    g.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let s = braking_cutin();
    let p = AebPolicy::default();
    c.bench_function("simulate/dt=0.01", |b| b.iter(|| simulate(black_box(&s), &p, 0.01, 30.0).unwrap()));
}

fn bench_kmeans(c: &mut Criterion) {
    let x = blobs(300, 4);
    c.bench_function("kmeans/900x2/k=3", |b| b.iter(|| kmeans(black_box(&x), 3, 5, 300, 1e-9).unwrap()));
}

criterion_group!(benches, bench_dl, bench_kde, bench_simulate, bench_kmeans);
criterion_main!(benches);
