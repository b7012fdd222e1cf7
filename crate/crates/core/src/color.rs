//! Color encodings shared by regions, voxels and edges.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorRGBA {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl ColorRGBA {
    pub const fn new(r: f64, g: f64, b: f64, a: f64) -> Self {
        ColorRGBA { r, g, b, a }
    }

    pub fn lerp(self, o: ColorRGBA, t: f64) -> ColorRGBA {
        ColorRGBA::new(
            self.r + (o.r - self.r) * t,
            self.g + (o.g - self.g) * t,
            self.b + (o.b - self.b) * t,
            self.a + (o.a - self.a) * t,
        )
    }

    pub fn components(self) -> [f64; 4] {
        [self.r, self.g, self.b, self.a]
    }
}

pub const GREEN: ColorRGBA = ColorRGBA::new(0.0, 1.0, 0.0, 1.0);
pub const ORANGE: ColorRGBA = ColorRGBA::new(1.0, 0.5, 0.0, 1.0);

/// Value at which the region ramp reaches opaque yellow.
pub const REGION_YELLOW_AT: f64 = 0.5;
/// Alpha saturates to 1 at this value.
pub const REGION_ALPHA_FULL_AT: f64 = 0.25;

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Region ramp: transparent green at 0, opaque yellow at 0.5, opaque red at 1.
pub fn encode_region_color(v: f64) -> ColorRGBA {
    let v = clamp_unit(v);
    let (r, g) = if v <= REGION_YELLOW_AT {
        (v / REGION_YELLOW_AT, 1.0)
    } else {
        (1.0, (1.0 - v) / (1.0 - REGION_YELLOW_AT))
    };
    let a = (v / REGION_ALPHA_FULL_AT).min(1.0);
    ColorRGBA::new(r, g, 0.0, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelColor {
    pub color: ColorRGBA,
    pub emissive: f64,
}

/// Voxel ramp: transparent black to emissive white, linear in every channel.
pub fn encode_voxel_color(v: f64) -> VoxelColor {
    let v = clamp_unit(v);
    VoxelColor { color: ColorRGBA::new(v, v, v, v), emissive: v }
}

/// `n_stops` colors from green at the source end to orange at the target end.
pub fn gradient_stops(n_stops: usize) -> Vec<ColorRGBA> {
    match n_stops {
        0 => Vec::new(),
        1 => vec![GREEN],
        n => (0..n).map(|k| GREEN.lerp(ORANGE, k as f64 / (n - 1) as f64)).collect(),
    }
}
