//! Segment masks, smoothed scalar fields and probe footprints.
//!
//! A [`SegmentMask`] is a binary film segment. [`smooth`] turns it into a
//! [`ScalarField`]: the mask convolved with a normalized 2D Gaussian and then
//! max-normalized to `[0, 1]`. Poses are rendered onto the same pixel grid as
//! a sum of per-tip Gaussians passed through a soft threshold
//! ([`render_footprint`]).
//!
//! Pixel `(i, j)` (column, row) has its center at continuous coordinate
//! `(i, j)`. Fields are zero outside the grid.

mod footprint;
mod raster;
mod smooth;
pub mod synth;

pub use footprint::{render_footprint, tip_offsets, tip_positions, SoftThreshold, TipKernel};
pub use raster::{load_mask, read_mask_bytes, read_sfld, write_pgm, write_sfld, SfldRaster};
pub use smooth::{gaussian_kernel_1d, smooth, smooth_grid};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("empty mask")]
    EmptyMask,
    #[error("non-grayscale input: {0}")]
    NotGrayscale(String),
    #[error("unreadable mask {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("scale_mm_per_px must be positive, got {0}")]
    InvalidScale(f64),
    #[error("grid size mismatch: {width}x{height} needs {expected} values, got {actual}")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("malformed SFLD raster: {0}")]
    BadRaster(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine placement of a pixel grid in the plane: `plane = origin + scale * px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelFrame {
    pub origin_mm: [f64; 2],
    pub scale_mm_per_px: f64,
}

impl Default for PixelFrame {
    fn default() -> Self {
        PixelFrame {
            origin_mm: [0.0, 0.0],
            scale_mm_per_px: 1.0,
        }
    }
}

impl PixelFrame {
    pub fn to_plane(&self, x_px: f64, y_px: f64) -> [f64; 2] {
        [
            self.origin_mm[0] + self.scale_mm_per_px * x_px,
            self.origin_mm[1] + self.scale_mm_per_px * y_px,
        ]
    }
}

/// Binary film segment. `data[y * width + x]` is `true` on the film.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMask {
    pub id: String,
    width: usize,
    height: usize,
    data: Vec<bool>,
    pub frame: PixelFrame,
}

impl SegmentMask {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        data: Vec<bool>,
        frame: PixelFrame,
    ) -> Result<Self, FieldError> {
        if data.len() != width * height {
            return Err(FieldError::SizeMismatch {
                width,
                height,
                expected: width * height,
                actual: data.len(),
            });
        }
        if !(frame.scale_mm_per_px > 0.0) {
            return Err(FieldError::InvalidScale(frame.scale_mm_per_px));
        }
        if !data.iter().any(|&v| v) {
            return Err(FieldError::EmptyMask);
        }
        Ok(SegmentMask {
            id: id.into(),
            width,
            height,
            data,
            frame,
        })
    }

    /// Builds a mask from a predicate evaluated at every pixel center.
    pub fn from_fn(
        id: impl Into<String>,
        width: usize,
        height: usize,
        frame: PixelFrame,
        inside: impl Fn(f64, f64) -> bool,
    ) -> Result<Self, FieldError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(inside(x as f64, y as f64));
            }
        }
        SegmentMask::new(id, width, height, data, frame)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Inclusive pixel bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0, y0, x1, y1)
    }

    pub fn centroid(&self) -> (f64, f64) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                }
            }
        }
        (sx / n, sy / n)
    }
}

/// Smoothed, max-normalized field over a segment's pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub segment_id: String,
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Gaussian standard deviation in pixels.
    pub sigma: f64,
    /// Factor that undoes the max-normalization (`raw = value * peak`).
    pub peak: f64,
    pub frame: PixelFrame,
}

impl ScalarField {
    pub fn from_values(
        segment_id: impl Into<String>,
        width: usize,
        height: usize,
        values: Vec<f64>,
        sigma: f64,
    ) -> Result<Self, FieldError> {
        if values.len() != width * height {
            return Err(FieldError::SizeMismatch {
                width,
                height,
                expected: width * height,
                actual: values.len(),
            });
        }
        Ok(ScalarField {
            segment_id: segment_id.into(),
            width,
            height,
            values,
            sigma,
            peak: 1.0,
            frame: PixelFrame::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Value at integer pixel coordinates, zero outside the grid.
    pub fn at_padded(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.values[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear sample at continuous coordinates with zero padding.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        if !x.is_finite() || !y.is_finite() {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (ix, iy) = (x0 as i64, y0 as i64);
        let v00 = self.at_padded(ix, iy);
        let v10 = self.at_padded(ix + 1, iy);
        let v01 = self.at_padded(ix, iy + 1);
        let v11 = self.at_padded(ix + 1, iy + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Inclusive bounding box of pixels whose value is at least `threshold`.
    pub fn support_box(&self, threshold: f64) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.at(x, y) >= threshold {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }

    /// Same field shifted by an integer offset, with zeros shifted in.
    pub fn translated(&self, dx: i64, dy: i64) -> ScalarField {
        let mut values = vec![0.0; self.values.len()];
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                values[(y as usize) * self.width + x as usize] = self.at_padded(x - dx, y - dy);
            }
        }
        ScalarField {
            values,
            ..self.clone()
        }
    }
}

/// Four-point-probe contact line: `tip_count` tips spaced along the pose axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeFootprint {
    pub tip_count: usize,
    pub tip_spacing_px: f64,
    /// Also the standard deviation of each rendered tip Gaussian.
    pub tip_radius_px: f64,
}

impl Default for ProbeFootprint {
    fn default() -> Self {
        ProbeFootprint {
            tip_count: 4,
            tip_spacing_px: 4.0,
            tip_radius_px: 1.5,
        }
    }
}

impl ProbeFootprint {
    /// Single isotropic blob, the form used for loss benchmarks.
    pub fn single(tip_radius_px: f64) -> Self {
        ProbeFootprint {
            tip_count: 1,
            tip_spacing_px: 0.0,
            tip_radius_px,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.tip_count >= 1 && self.tip_spacing_px >= 0.0 && self.tip_radius_px > 0.0
    }

    /// Distance from the first to the last tip.
    pub fn span(&self) -> f64 {
        self.tip_spacing_px * (self.tip_count.saturating_sub(1)) as f64
    }
}

/// Contact pose in pixel coordinates. `theta` lives in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub footprint: ProbeFootprint,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64, footprint: ProbeFootprint) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
            footprint,
        }
    }

    /// Clamps the center into `[0, width - 1] x [0, height - 1]` and re-normalizes theta.
    pub fn clamped(self, width: usize, height: usize) -> Self {
        let xmax = width.saturating_sub(1) as f64;
        let ymax = height.saturating_sub(1) as f64;
        Pose {
            x: self.x.clamp(0.0, xmax),
            y: self.y.clamp(0.0, ymax),
            theta: normalize_angle(self.theta),
            ..self
        }
    }
}

/// Maps an angle onto `[0, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_normalization_wraps_half_turns() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert!((normalize_angle(PI + 0.25) - 0.25).abs() < 1e-15);
        assert!((normalize_angle(-0.25) - (PI - 0.25)).abs() < 1e-15);
        assert!(normalize_angle(-1e-300) < PI);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let err = SegmentMask::new("a", 2, 2, vec![false; 4], PixelFrame::default()).unwrap_err();
        assert!(matches!(err, FieldError::EmptyMask));
    }

    #[test]
    fn bilinear_sample_hits_pixel_centers() {
        let f = ScalarField::from_values("f", 2, 2, vec![0.0, 1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(f.sample(1.0, 1.0), 3.0);
        assert!((f.sample(0.5, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(f.sample(-3.0, 0.0), 0.0);
    }

    #[test]
    fn clamping_keeps_pose_inside_the_grid() {
        let p = Pose::new(-4.0, 80.0, 4.0, ProbeFootprint::single(2.0)).clamped(64, 64);
        assert_eq!((p.x, p.y), (0.0, 63.0));
        assert!(p.theta >= 0.0 && p.theta < PI);
    }
}
