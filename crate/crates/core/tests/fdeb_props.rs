mod common;

use common::{f1_top_edges, mean_pairwise_spread, parallel_grid, straight};
use dtb_core::fdeb::{bundle, compatibility, export_bundles, import_bundles, subdivide, BundleParams, Polyline};
use dtb_core::Vec3;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn segment() -> impl Strategy<Value = (Vec3, Vec3)> {
    (vec3(), vec3()).prop_filter("positive length", |(a, b)| a.distance(*b) > 1e-3)
}

proptest! {
    #[test]
    fn compatibility_bounded_and_symmetric(p in segment(), q in segment()) {
        let a = compatibility(p, q).unwrap();
        let b = compatibility(q, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, b);
        prop_assert_eq!(compatibility(p, p).unwrap(), 1.0);
    }

    #[test]
    fn subdivision_stays_on_polyline(pts in proptest::collection::vec(vec3(), 2..6)) {
        let line = Polyline { points: pts.clone(), weight: 1.0 };
        let s = subdivide(&line);
        prop_assert_eq!(s.intervals(), 2 * line.intervals());
        prop_assert_eq!(s.points[0], pts[0]);
        prop_assert_eq!(*s.points.last().unwrap(), *pts.last().unwrap());
        for p in &s.points {
            let d = pts.windows(2).map(|w| seg_dist(*p, w[0], w[1])).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-9, "point {:?} is {} off the polyline", p, d);
        }
    }
}

fn seg_dist(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let d = b - a;
    let n = d.norm_sq();
    if n == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / n).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

#[test]
fn grid_spread_strictly_decreases() {
    let grid = parallel_grid();
    let out = bundle(&grid, &BundleParams::default()).unwrap();
    let before: Vec<_> = grid.iter().map(|e| straight(e.a, e.b, 64)).collect();
    let after: Vec<_> = out.iter().map(|e| e.points.clone()).collect();
    assert!(mean_pairwise_spread(&after) < 0.5 * mean_pairwise_spread(&before));
    let mid = |lines: &[Vec<Vec3>]| {
        let m: Vec<Vec<Vec3>> = lines.iter().map(|l| vec![l[0], l[32], l[64]]).collect();
        mean_pairwise_spread(&m)
    };
    assert!(mid(&after) < mid(&before));
}

#[test]
fn output_shape_follows_params() {
    let edges = f1_top_edges(60);
    for (cycles, init) in [(1, 1), (3, 2), (6, 1)] {
        let p = BundleParams { n_cycles: cycles, initial_subdivisions: init, ..Default::default() };
        let out = bundle(&edges, &p).unwrap();
        assert!(out.iter().all(|e| e.points.len() == (init << cycles) + 1));
    }
}

#[test]
fn spatial_grid_does_not_change_result() {
    let edges = f1_top_edges(300);
    let a = bundle(&edges, &BundleParams::default()).unwrap();
    let b = bundle(&edges, &BundleParams { spatial_grid: false, ..Default::default() }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn hundred_edge_bundle_round_trips() {
    let edges = f1_top_edges(100);
    let params = BundleParams::default();
    let out = bundle(&edges, &params).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("b.json");
    export_bundles(&out, &params, &path).unwrap();
    let doc = import_bundles(&path).unwrap();
    assert_eq!(doc.params, params);
    assert_eq!(doc.edges.len(), 100);
    for (a, b) in doc.edges.iter().zip(&out) {
        assert_eq!((a.src, a.dst), (b.src, b.dst));
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(p.distance(*q) <= 1e-6);
        }
    }
}
