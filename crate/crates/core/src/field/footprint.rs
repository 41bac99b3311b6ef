use super::{Pose, ProbeFootprint, ScalarField};

/// Window half-width around the outermost tips, in tip standard deviations.
const WINDOW_SIGMAS: f64 = 6.0;

/// Signed tip offsets along the contact line, centered on the pose.
pub fn tip_offsets(footprint: &ProbeFootprint) -> Vec<f64> {
    let n = footprint.tip_count.max(1);
    let mid = (n - 1) as f64 / 2.0;
    (0..n)
        .map(|i| (i as f64 - mid) * footprint.tip_spacing_px)
        .collect()
}

/// Tip coordinates: the canonical layout rotated by `theta` about `(x, y)`.
pub fn tip_positions(pose: &Pose) -> Vec<(f64, f64)> {
    let (s, c) = pose.theta.sin_cos();
    tip_offsets(&pose.footprint)
        .into_iter()
        .map(|o| (pose.x + o * c, pose.y + o * s))
        .collect()
}

/// Logistic soft threshold rescaled so that `0 ↦ 0` and `u → ∞ ↦ 1`.
///
/// `value(u) = (S(u) - S(0)) / (1 - S(0))` with `S(u) = 1 / (1 + exp(-β (u - ½)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftThreshold {
    pub steepness: f64,
    s0: f64,
}

impl SoftThreshold {
    pub fn new(steepness: f64) -> Self {
        let s0 = logistic(-0.5 * steepness);
        SoftThreshold { steepness, s0 }
    }

    pub fn value(&self, u: f64) -> f64 {
        (logistic(self.steepness * (u - 0.5)) - self.s0) / (1.0 - self.s0)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.value_and_derivative(u).1
    }

    pub fn value_and_derivative(&self, u: f64) -> (f64, f64) {
        let s = logistic(self.steepness * (u - 0.5));
        let inv = 1.0 / (1.0 - self.s0);
        ((s - self.s0) * inv, self.steepness * s * (1.0 - s) * inv)
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-pose evaluator of the rendered footprint and its pose derivatives.
#[derive(Debug, Clone)]
pub struct TipKernel {
    tips: Vec<(f64, f64)>,
    offsets: Vec<f64>,
    sin: f64,
    cos: f64,
    sigma: f64,
    threshold: SoftThreshold,
}

impl TipKernel {
    pub fn new(pose: &Pose, sigma: f64, steepness: f64) -> Self {
        let (sin, cos) = pose.theta.sin_cos();
        TipKernel {
            tips: tip_positions(pose),
            offsets: tip_offsets(&pose.footprint),
            sin,
            cos,
            sigma,
            threshold: SoftThreshold::new(steepness),
        }
    }

    /// Kernel for `pose` using its own tip radius as the Gaussian width.
    pub fn for_pose(pose: &Pose, steepness: f64) -> Self {
        TipKernel::new(pose, pose.footprint.tip_radius_px, steepness)
    }

    /// Sum of tip Gaussians before thresholding.
    pub fn raw(&self, px: f64, py: f64) -> f64 {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        self.tips
            .iter()
            .map(|&(tx, ty)| (-((px - tx).powi(2) + (py - ty).powi(2)) * inv).exp())
            .sum()
    }

    pub fn value(&self, px: f64, py: f64) -> f64 {
        self.threshold.value(self.raw(px, py))
    }

    /// Footprint value and its partials with respect to `(x, y, theta)`.
    pub fn value_and_grad(&self, px: f64, py: f64) -> (f64, [f64; 3]) {
        let s2 = self.sigma * self.sigma;
        let inv = 1.0 / (2.0 * s2);
        let mut raw = 0.0;
        let mut g = [0.0; 3];
        for (&(tx, ty), &off) in self.tips.iter().zip(&self.offsets) {
            let dx = px - tx;
            let dy = py - ty;
            let e = (-(dx * dx + dy * dy) * inv).exp();
            raw += e;
            // d e / d tip = e * (p - tip) / σ²
            let ex = e * dx / s2;
            let ey = e * dy / s2;
            g[0] += ex;
            g[1] += ey;
            g[2] += ex * (-off * self.sin) + ey * (off * self.cos);
        }
        let (v, d) = self.threshold.value_and_derivative(raw);
        (v, [g[0] * d, g[1] * d, g[2] * d])
    }

    /// Calls `f(px, py, value, grad)` for every pixel of the clipped window.
    ///
    /// Same numbers as [`TipKernel::value_and_grad`] per pixel, but the tip
    /// Gaussians are factored into row and column terms first.
    pub fn for_each_in_window<F: FnMut(usize, usize, f64, [f64; 3])>(&self, width: usize, height: usize, mut f: F) {
        let (x0, x1, y0, y1) = self.window(width, height);
        if x0 >= x1 || y0 >= y1 {
            return;
        }
        let s2 = self.sigma * self.sigma;
        let inv = 1.0 / (2.0 * s2);
        let (nx, ny) = (x1 - x0, y1 - y0);
        let nt = self.tips.len();
        // ex[t][i] = exp(-dx²/2σ²), dxs[t][i] = dx / σ²
        let mut ex = vec![0.0; nt * nx];
        let mut dxs = vec![0.0; nt * nx];
        let mut ey = vec![0.0; nt * ny];
        let mut dys = vec![0.0; nt * ny];
        for (t, &(tx, ty)) in self.tips.iter().enumerate() {
            for i in 0..nx {
                let dx = (x0 + i) as f64 - tx;
                ex[t * nx + i] = (-dx * dx * inv).exp();
                dxs[t * nx + i] = dx / s2;
            }
            for j in 0..ny {
                let dy = (y0 + j) as f64 - ty;
                ey[t * ny + j] = (-dy * dy * inv).exp();
                dys[t * ny + j] = dy / s2;
            }
        }
        let rot: Vec<(f64, f64)> = self.offsets.iter().map(|&o| (-o * self.sin, o * self.cos)).collect();
        for j in 0..ny {
            for i in 0..nx {
                let mut raw = 0.0;
                let mut g = [0.0; 3];
                for t in 0..nt {
                    let e = ex[t * nx + i] * ey[t * ny + j];
                    raw += e;
                    let gx = e * dxs[t * nx + i];
                    let gy = e * dys[t * ny + j];
                    g[0] += gx;
                    g[1] += gy;
                    g[2] += gx * rot[t].0 + gy * rot[t].1;
                }
                let (v, d) = self.threshold.value_and_derivative(raw);
                f(x0 + i, y0 + j, v, [g[0] * d, g[1] * d, g[2] * d]);
            }
        }
    }

    /// Half-open pixel window `(x0, x1, y0, y1)` outside which the kernel is negligible.
    pub fn window(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let pad = WINDOW_SIGMAS * self.sigma;
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(tx, ty) in &self.tips {
            xmin = xmin.min(tx);
            xmax = xmax.max(tx);
            ymin = ymin.min(ty);
            ymax = ymax.max(ty);
        }
        let lo = |v: f64| (v - pad).floor().max(0.0) as usize;
        let hi = |v: f64, n: usize| ((v + pad).ceil() + 1.0).clamp(0.0, n as f64) as usize;
        let x0 = lo(xmin).min(width);
        let y0 = lo(ymin).min(height);
        (x0, hi(xmax, width).max(x0), y0, hi(ymax, height).max(y0))
    }
}

/// Renders the soft-thresholded tip Gaussians of `pose` on a `width x height` grid.
pub fn render_footprint(
    pose: &Pose,
    (width, height): (usize, usize),
    sigma: f64,
    steepness: f64,
) -> ScalarField {
    let kernel = TipKernel::new(pose, sigma, steepness);
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            values.push(kernel.value(x as f64, y as f64).clamp(0.0, 1.0));
        }
    }
    ScalarField::from_values("footprint", width, height, values, sigma)
        .expect("grid dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_tip_sits_on_the_pose() {
        let p = Pose::new(3.0, 4.0, 1.1, ProbeFootprint::single(1.0));
        assert_eq!(tip_positions(&p), vec![(3.0, 4.0)]);
    }

    #[test]
    fn vertical_pair_splits_along_y() {
        let fp = ProbeFootprint {
            tip_count: 2,
            tip_spacing_px: 6.0,
            tip_radius_px: 1.0,
        };
        let tips = tip_positions(&Pose::new(10.0, 10.0, PI / 2.0, fp));
        assert!((tips[0].0 - 10.0).abs() < 1e-12 && (tips[0].1 - 7.0).abs() < 1e-12);
        assert!((tips[1].0 - 10.0).abs() < 1e-12 && (tips[1].1 - 13.0).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_endpoints() {
        let t = SoftThreshold::new(10.0);
        assert_eq!(t.value(0.0), 0.0);
        assert!(t.value(1.0) > 0.99 && t.value(1.0) < 1.0);
        assert!(t.value(50.0) <= 1.0);
        let h = 1e-6;
        let fd = (t.value(0.3 + h) - t.value(0.3 - h)) / (2.0 * h);
        assert!((fd - t.derivative(0.3)).abs() < 1e-7);
    }

    #[test]
    fn single_tip_peak_is_at_the_center() {
        let p = Pose::new(16.0, 16.0, 0.4, ProbeFootprint::single(2.0));
        let f = render_footprint(&p, (33, 33), 2.0, 10.0);
        let (mut best, mut arg) = (f64::MIN, (0, 0));
        for y in 0..33 {
            for x in 0..33 {
                if f.at(x, y) > best {
                    best = f.at(x, y);
                    arg = (x, y);
                }
            }
        }
        assert_eq!(arg, (16, 16));
    }

    #[test]
    fn window_covers_all_tips() {
        let p = Pose::new(2.0, 60.0, 0.0, ProbeFootprint::default());
        let k = TipKernel::for_pose(&p, 10.0);
        let (x0, x1, y0, y1) = k.window(64, 64);
        assert_eq!((x0, y0), (0, 51));
        assert!(x1 > 15 && y1 == 64);
    }
}
