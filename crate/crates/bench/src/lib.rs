//! Benchmark fixtures shared by the criterion targets.

use std::sync::OnceLock;

use dtb_core::connectome::{global_normalize, rank_all};
use dtb_core::fdeb::{inputs_from_edges, BundleInput};
use dtb_core::synth::{gen_fixture, Fixture};
use dtb_core::GenSpec;

/// Set to run the full 38,036-edge bundling benchmark.
pub const FULL_BUNDLE_ENV: &str = "DTB_BENCH_FULL";

pub fn f1() -> &'static Fixture {
    static F1: OnceLock<Fixture> = OnceLock::new();
    F1.get_or_init(|| gen_fixture(&GenSpec::f1()).expect("F1 generates"))
}

/// The `n` heaviest F1 edges with endpoint positions.
pub fn top_edges(n: usize) -> Vec<BundleInput> {
    let f = f1();
    let mut ranked = rank_all(&global_normalize(&f.dti).expect("normalizes"));
    ranked.edges.truncate(n);
    inputs_from_edges(&ranked, &f.atlas).expect("edges resolve")
}

pub fn full_bundle_enabled() -> bool {
    std::env::var_os(FULL_BUNDLE_ENV).is_some()
}
