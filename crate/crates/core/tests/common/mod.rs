#![allow(dead_code)]

use std::sync::OnceLock;

use dtb_core::connectome::{rank_all, EdgeSet};
use dtb_core::fdeb::{inputs_from_edges, BundleInput};
use dtb_core::synth::{gen_fixture, Fixture, GenSpec};
use dtb_core::Vec3;

pub fn f1() -> &'static Fixture {
    static F1: OnceLock<Fixture> = OnceLock::new();
    F1.get_or_init(|| gen_fixture(&GenSpec::f1()).expect("F1 generates"))
}

/// 50 parallel 100 mm edges along x, laid out on a 10×5 grid with 2 mm pitch
/// in the perpendicular plane.
pub fn parallel_grid() -> Vec<BundleInput> {
    let mut out = Vec::new();
    for row in 0..5 {
        for col in 0..10 {
            let a = Vec3::new(0.0, col as f64 * 2.0, row as f64 * 2.0);
            out.push(BundleInput { src: (row * 10 + col) as u32, dst: 1000, weight: 1.0, a, b: a + Vec3::new(100.0, 0.0, 0.0) });
        }
    }
    out
}

#[allow(clippy::needless_range_loop)]
/// Mean distance between same-index interior points over all pairs of lines.
pub fn mean_pairwise_spread(lines: &[Vec<Vec3>]) -> f64 {
    let m = lines[0].len() - 1;
    let (mut sum, mut n) = (0.0, 0usize);
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            for i in 1..m {
                sum += lines[a][i].distance(lines[b][i]);
                n += 1;
            }
        }
    }
    sum / n as f64
}

pub fn straight(a: Vec3, b: Vec3, intervals: usize) -> Vec<Vec3> {
    (0..=intervals).map(|k| a + (b - a) * (k as f64 / intervals as f64)).collect()
}

/// The `n` heaviest F1 edges with positions attached.
pub fn f1_top_edges(n: usize) -> Vec<BundleInput> {
    let f = f1();
    let ranked = rank_all(&f.dti);
    let top = EdgeSet { edges: ranked.edges[..n].to_vec() };
    inputs_from_edges(&top, &f.atlas).unwrap()
}

/// Tiny deterministic generator for test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
