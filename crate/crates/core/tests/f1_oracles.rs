//! Fixture-F1 examples checked against brute-force oracles.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::f1;
use dtb_core::aal::DMN_LABELS;
use dtb_core::connectome::{edges_from_regions, global_normalize, rank_all, region_adjacency};
use dtb_core::scene::SceneService;
use dtb_core::signal::{cross_correlation, estimate_lag, mean_series, peak_time, region_mean, top_regions, voxel_mean_over_time};

#[test]
fn region_mean_matches_straight_sum() {
    let f = f1();
    let region = f.atlas.region(3).unwrap();
    let mut sum = 0.0;
    for id in &region.voxel_ids {
        sum += f.biological.series(*id).unwrap()[10];
    }
    let want = sum / region.voxel_ids.len() as f64;
    assert!((region_mean(&f.biological, region, 10).unwrap() - want).abs() < 1e-12);
}

#[test]
fn voxel_zero_mean_over_time() {
    let f = f1();
    let s = f.biological.series(0).unwrap();
    let mut want = 0.0;
    for v in s {
        want += v;
    }
    want /= s.len() as f64;
    assert!((voxel_mean_over_time(&f.biological, 0).unwrap() - want).abs() < 1e-12);
}

#[test]
fn planted_burst_is_peak_and_top_region() {
    let f = f1();
    let burst = f.manifest.burst.as_ref().unwrap();
    // Oracle: scan pooled means directly.
    let mut best = (0usize, f64::NEG_INFINITY);
    for t in 0..f.biological.n_timepoints() {
        let mut s = 0.0;
        let mut n = 0;
        for (_, series) in f.biological.iter() {
            s += series[t];
            n += 1;
        }
        if s / n as f64 > best.1 {
            best = (t, s / n as f64);
        }
    }
    assert_eq!(best.0, burst.time_index);
    let regions: Vec<_> = f.atlas.regions().iter().collect();
    assert_eq!(peak_time(&f.biological, &regions).unwrap(), burst.time_index);
    let top = top_regions(&f.biological, f.atlas.regions(), burst.time_index, 1).unwrap();
    assert_eq!(top[0].0, burst.region_label);
}

#[test]
fn lag_of_shifted_mean_series_matches_exhaustive_scan() {
    let f = f1();
    let ids: Vec<u32> = f.atlas.voxels().map(|v| v.id).collect();
    let a = mean_series(&f.biological, &ids).unwrap();
    let n = a.len() as i64;
    let burst = f.manifest.burst.as_ref().unwrap();
    // Keep the shifted burst at least three widths away from either end;
    // beyond that the zero padding truncates it.
    let margin = (3.0 * burst.global_width) as i64;
    let (t0, span) = (burst.time_index as i64, n / 4);
    let lo = (-span).max(margin - t0);
    let hi = span.min(n - 1 - margin - t0);
    assert!(lo < 0 && hi >= 3);
    for s in lo..=hi {
        // b(t) = a(t - s), zero padded.
        let b: Vec<f64> = (0..n).map(|t| if (0..n).contains(&(t - s)) { a[(t - s) as usize] } else { 0.0 }).collect();
        let mut best = (0i64, f64::NEG_INFINITY);
        for m in 0..=n / 2 {
            for cand in if m == 0 { vec![0] } else { vec![-m, m] } {
                let c = cross_correlation(&a, &b, cand);
                if c > best.1 {
                    best = (cand, c);
                }
            }
        }
        assert_eq!(estimate_lag(&a, &b), best.0);
        assert_eq!(best.0, s, "shift {s}");
    }
}

#[test]
fn dti_count_matches_manifest() {
    let f = f1();
    assert_eq!(f.dti.len(), f.manifest.dti_edge_count);
    assert_eq!(f.atlas.voxel_count(), f.manifest.n_voxels);
    assert_eq!(f.atlas.functional_regions().len(), f.manifest.n_functional_regions);
}

#[test]
fn region_adjacency_matches_double_loop() {
    let f = f1();
    let m = global_normalize(&f.dti).unwrap();
    let adj = region_adjacency(&m, &f.atlas).unwrap();
    let mut want: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut intra = 0.0;
    for e in m.entries() {
        let (a, b) = (f.atlas.region_of(e.src).unwrap(), f.atlas.region_of(e.dst).unwrap());
        if a == b {
            intra += e.weight;
        } else {
            *want.entry((a, b)).or_default() += e.weight;
        }
    }
    assert_eq!(adj.entries.len(), want.len());
    for (k, w) in &want {
        assert!((adj.entries[k] - w).abs() < 1e-12, "{k:?}");
    }
    assert!((adj.intra_weight - intra).abs() < 1e-9);
}

#[test]
fn dmn_edges_match_membership_scan() {
    let f = f1();
    let ranked = rank_all(&f.dti);
    let labels: BTreeSet<u32> = DMN_LABELS.into_iter().collect();
    let got = edges_from_regions(&ranked, &f.atlas, &labels).unwrap();
    let want: Vec<_> = ranked.iter().filter(|e| labels.contains(&f.atlas.region_of(e.src).unwrap())).cloned().collect();
    assert_eq!(got.edges, want);
}

#[test]
fn navigation_matches_sorted_adjacency_row() {
    let f = f1();
    let svc = SceneService::new(vec![f.clone().into_dataset("f1")]).unwrap();
    let id = svc.open_session("f1").unwrap().session_id;
    let adj = region_adjacency(&global_normalize(&f.dti).unwrap(), &f.atlas).unwrap();
    for from in [1u32, 16, 35, 90] {
        let mut want: Vec<(u32, f64)> = adj.entries.iter().filter(|((a, _), _)| *a == from).map(|((_, b), w)| (*b, *w)).collect();
        want.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
        assert_eq!(svc.navigate_next(&id, from).unwrap(), want);
    }
}

#[test]
fn selecting_sixteen_highlights_it() {
    let f = f1();
    assert_eq!(f.atlas.region(16).unwrap().name, "Frontal_Inf_Orb_R");
    let svc = SceneService::new(vec![f.clone().into_dataset("f1")]).unwrap();
    let id = svc.open_session("f1").unwrap().session_id;
    svc.select_region(&id, 16).unwrap();
    let snap = svc.snapshot(&id).unwrap();
    let lit: Vec<u32> = snap.spheres.iter().filter(|s| s.highlighted).map(|s| s.label).collect();
    assert_eq!(lit, vec![16]);
    assert_eq!(snap.charts.len(), f.atlas.region(16).unwrap().voxel_ids.len());
    assert!(!snap.polylines.is_empty());
    assert!(snap.polylines.iter().all(|p| p.flagged && f.atlas.region_of(p.src) == Some(16)));
}
