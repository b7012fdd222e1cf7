mod common;

use common::f1;
use dtb_core::slicer::{plane_axis_map, raster, slab_stack, voxels_in_slab, Axis, SlicePlane};
use proptest::prelude::*;

fn axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::Sagittal), Just(Axis::Coronal), Just(Axis::Horizontal)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thicker_slabs_are_supersets(axis in axis(), coord in -80.0..80.0f64, t1 in 0.5..8.0f64, extra in 0.0..8.0f64) {
        let f = f1();
        let thin = voxels_in_slab(&f.atlas, &SlicePlane::new(axis, coord, t1).unwrap());
        let thick = voxels_in_slab(&f.atlas, &SlicePlane::new(axis, coord, t1 + extra).unwrap());
        prop_assert!(thin.iter().all(|v| thick.binary_search(v).is_ok()));
    }

    #[test]
    fn raster_cells_within_contributor_range(axis in axis(), coord in -80.0..80.0f64, t in 0usize..166) {
        let f = f1();
        let plane = SlicePlane::new(axis, coord, 4.0).unwrap();
        let r = raster(&f.atlas, &f.biological, &plane, t).unwrap();
        let members = voxels_in_slab(&f.atlas, &plane);
        let vals: Vec<f64> = members.iter().map(|id| f.biological.series(*id).unwrap()[t]).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r.occupied() <= members.len());
        prop_assert_eq!(r.occupied() == 0, members.is_empty());
        for v in r.rows.iter().flatten().flatten() {
            prop_assert!(*v >= lo && *v <= hi);
        }
    }

    #[test]
    fn stack_covers_each_voxel_once(axis in axis(), thickness in 0.7..12.0f64) {
        let f = f1();
        let stack = slab_stack(&f.atlas, axis, thickness).unwrap();
        let mut ids: Vec<u32> = stack.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        ids.sort_unstable();
        let all: Vec<u32> = f.atlas.voxels().map(|v| v.id).collect();
        prop_assert_eq!(ids, all);
        // With the closed slab rule, every voxel sits in the slab of its stack position too.
        let k = plane_axis_map(axis);
        for (plane, members) in &stack {
            for id in members {
                let x = f.atlas.voxel(*id).unwrap().position_mm[k];
                prop_assert!((x - plane.coordinate_mm).abs() <= plane.thickness_mm / 2.0 + 1e-9);
            }
        }
    }
}

#[test]
fn export_writes_pgm_and_sidecar() {
    let f = f1();
    let plane = SlicePlane::for_atlas(&f.atlas, Axis::Horizontal, 10.0).unwrap();
    let r = raster(&f.atlas, &dtb_core::signal::minmax_normalize(&f.biological), &plane, 5).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (pgm, json) = r.export(tmp.path()).unwrap();
    assert_eq!(pgm.file_name().unwrap(), "slice_horizontal_10_t5.pgm");
    let text = std::fs::read_to_string(&pgm).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("P2"));
    assert_eq!(lines.next().unwrap(), format!("{} {}", r.width(), r.height()));
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(side["axis"], "horizontal");
    assert_eq!(side["t"], 5);
    assert_eq!(side["rows"].as_array().unwrap().len(), r.height());
}
