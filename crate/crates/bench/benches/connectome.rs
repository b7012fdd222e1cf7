use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dtb_bench::f1;
use dtb_core::connectome::{global_normalize, rank_all, region_adjacency, threshold_filter, top_fraction};
use dtb_core::signal::{compare_sets, peak_time, CompareScope};

fn connectome(c: &mut Criterion) {
    let f = f1();
    let norm = global_normalize(&f.dti).unwrap();
    let ranked = rank_all(&norm);
    c.bench_function("global_normalize_380k", |b| b.iter(|| global_normalize(black_box(&f.dti)).unwrap()));
    c.bench_function("rank_all_380k", |b| b.iter(|| rank_all(black_box(&norm))));
    c.bench_function("top_fraction_0.1", |b| b.iter(|| top_fraction(black_box(&norm), 0.1).unwrap()));
    c.bench_function("threshold_filter_0.8", |b| b.iter(|| threshold_filter(black_box(&ranked), 0.8)));
    c.bench_function("region_adjacency", |b| b.iter(|| region_adjacency(black_box(&norm), &f.atlas).unwrap()));
}

fn signals(c: &mut Criterion) {
    let f = f1();
    let functional = f.atlas.functional_regions();
    c.bench_function("peak_time", |b| b.iter(|| peak_time(black_box(&f.biological), &functional).unwrap()));
    c.bench_function("compare_all", |b| {
        b.iter(|| compare_sets(black_box(&f.biological), &f.dtb, &f.atlas, &CompareScope::All).unwrap())
    });
}

criterion_group!(benches, connectome, signals);
criterion_main!(benches);
