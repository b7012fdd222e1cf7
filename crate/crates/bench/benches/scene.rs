use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dtb_bench::f1;
use dtb_core::scene::StateUpdate;
use dtb_core::slicer::raster;
use dtb_core::{Axis, SceneService, SlicePlane};

fn scene(c: &mut Criterion) {
    let svc = SceneService::new(vec![f1().clone().into_dataset("f1")]).unwrap();
    let id = svc.open_session("f1").unwrap().session_id;
    c.bench_function("snapshot_fresh", |b| b.iter(|| svc.snapshot(black_box(&id)).unwrap()));

    let u = StateUpdate { time_index: Some(119), threshold_tau: Some(0.9), compare_mode: Some(true), ..Default::default() };
    svc.update(&id, &u).unwrap();
    svc.select_region(&id, 35).unwrap();
    c.bench_function("snapshot_compare_selected", |b| b.iter(|| svc.snapshot(black_box(&id)).unwrap()));

    let f = f1();
    let plane = SlicePlane::for_atlas(&f.atlas, Axis::Horizontal, 10.0).unwrap();
    c.bench_function("slice_raster", |b| b.iter(|| raster(&f.atlas, black_box(&f.biological), &plane, 119).unwrap()));
}

criterion_group!(benches, scene);
criterion_main!(benches);
