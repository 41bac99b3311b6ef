//! Synthetic film segments for benchmarks and demos.

use super::{PixelFrame, SegmentMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rasterized disk (pixel centers within `radius` of `(cx, cy)`).
pub fn disk(
    id: impl Into<String>,
    width: usize,
    height: usize,
    center: (f64, f64),
    radius: f64,
) -> SegmentMask {
    SegmentMask::from_fn(id, width, height, PixelFrame::default(), |x, y| {
        (x - center.0).powi(2) + (y - center.1).powi(2) <= radius * radius
    })
    .expect("disk must contain at least one pixel center")
}

/// Random rotated superellipse (exponent 2..3.5, so always convex) near the frame center.
pub fn convex_segment(id: impl Into<String>, width: usize, height: usize, seed: u64) -> SegmentMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = width.min(height) as f64 / 2.0;
    let a = rng.random_range(0.55..0.75) * half;
    let b = rng.random_range(0.75..1.0) * a;
    let p: f64 = rng.random_range(2.0..3.5);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let cx = width as f64 / 2.0 + rng.random_range(-0.08..0.08) * half;
    let cy = height as f64 / 2.0 + rng.random_range(-0.08..0.08) * half;
    let (s, c) = phi.sin_cos();
    SegmentMask::from_fn(id, width, height, PixelFrame::default(), |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        let u = (dx * c + dy * s) / a;
        let v = (-dx * s + dy * c) / b;
        u.abs().powf(p) + v.abs().powf(p) <= 1.0
    })
    .expect("superellipse covers the frame center")
}

/// Layout of a rectangular drop-cast array in the robot plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayLayout {
    pub columns: usize,
    pub rows: usize,
    pub plane_mm: [f64; 2],
    pub crop_px: usize,
    pub scale_mm_per_px: f64,
}

impl Default for ArrayLayout {
    fn default() -> Self {
        ArrayLayout {
            columns: 5,
            rows: 7,
            plane_mm: [100.0, 150.0],
            crop_px: 64,
            scale_mm_per_px: 0.25,
        }
    }
}

/// One convex segment per array cell, each cropped to `crop_px` and placed at its cell's center.
pub fn film_array(layout: &ArrayLayout, seed: u64) -> Vec<SegmentMask> {
    let pitch_x = layout.plane_mm[0] / layout.columns as f64;
    let pitch_y = layout.plane_mm[1] / layout.rows as f64;
    let half_crop_mm = layout.crop_px as f64 * layout.scale_mm_per_px / 2.0;
    let mut out = Vec::with_capacity(layout.columns * layout.rows);
    for r in 0..layout.rows {
        for c in 0..layout.columns {
            let idx = r * layout.columns + c;
            let mut mask = convex_segment(
                format!("film{idx:02}"),
                layout.crop_px,
                layout.crop_px,
                seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let center = [(c as f64 + 0.5) * pitch_x, (r as f64 + 0.5) * pitch_y];
            mask.frame = PixelFrame {
                origin_mm: [center[0] - half_crop_mm, center[1] - half_crop_mm],
                scale_mm_per_px: layout.scale_mm_per_px,
            };
            out.push(mask);
        }
    }
    out
}
