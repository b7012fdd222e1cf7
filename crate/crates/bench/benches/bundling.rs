use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dtb_bench::{full_bundle_enabled, top_edges};
use dtb_core::fdeb::{bundle, CompatibilityCache};
use dtb_core::BundleParams;

fn bundling(c: &mut Criterion) {
    let params = BundleParams::default();
    let mut g = c.benchmark_group("bundle");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    let mut sizes = vec![500, 2000];
    if full_bundle_enabled() {
        sizes.push(38_036);
    }
    for n in sizes {
        let inputs = top_edges(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &inputs, |b, inputs| {
            b.iter(|| bundle(black_box(inputs), &params).unwrap())
        });
    }
    g.finish();
}

fn compatibility(c: &mut Criterion) {
    let inputs = top_edges(5000);
    let segs: Vec<_> = inputs.iter().map(|e| (e.a, e.b)).collect();
    let mut g = c.benchmark_group("compat_cache_5000");
    g.sample_size(10);
    for grid in [false, true] {
        g.bench_with_input(BenchmarkId::from_parameter(if grid { "grid" } else { "brute" }), &grid, |b, &grid| {
            b.iter(|| CompatibilityCache::build(black_box(&segs), 0.05, grid).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bundling, compatibility);
criterion_main!(benches);
