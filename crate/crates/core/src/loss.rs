//! Differentiable pose-placement objective.
//!
//! ```text
//! loss = -w_coverage * Σᵢ coverageᵢ  -  w_angle * Var(θ)  +  w_overlap * Σ_{i<j} overlapᵢⱼ
//! ```
//!
//! `coverageᵢ` is the field averaged under pose i's soft-thresholded footprint,
//! so it lies in `[0, 1]`. `overlapᵢⱼ` is the normalized product integral of
//! the two poses' tip Gaussians (before thresholding), computed in closed
//! form: identical poses give 1, distant poses give 0. Angle variance uses the
//! population convention on angles normalized to `[0, π)`.

use crate::field::{tip_offsets, tip_positions, Pose, ScalarField, TipKernel};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("non-finite {0} (check sigmoid steepness and pose scale)")]
    NonFinite(&'static str),
    #[error("pose set is empty")]
    NoPoses,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_coverage: f64,
    pub w_angle: f64,
    pub w_overlap: f64,
    pub sigmoid_steepness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_coverage: 1.0,
            w_angle: 1.0,
            w_overlap: 1.0,
            sigmoid_steepness: 10.0,
        }
    }
}

impl LossWeights {
    pub fn is_valid(&self) -> bool {
        self.w_coverage >= 0.0
            && self.w_angle >= 0.0
            && self.w_overlap >= 0.0
            && self.sigmoid_steepness > 0.0
            && self.sigmoid_steepness.is_finite()
    }
}

/// Term-by-term loss value and the gradient `(∂x, ∂y, ∂θ)` for each pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub coverage_term: f64,
    pub angle_term: f64,
    pub overlap_term: f64,
    pub grad: Vec<[f64; 3]>,
}

/// Coverage of one pose and its gradient.
fn pose_coverage(field: &ScalarField, pose: &Pose, steepness: f64) -> (f64, [f64; 3]) {
    let kernel = TipKernel::for_pose(pose, steepness);
    let (mut num, mut den) = (0.0, 0.0);
    let mut dnum = [0.0; 3];
    let mut dden = [0.0; 3];
    kernel.for_each_in_window(field.width(), field.height(), |px, py, v, g| {
        let f = field.at(px, py);
        num += f * v;
        den += v;
        for c in 0..3 {
            dnum[c] += f * g[c];
            dden[c] += g[c];
        }
    });
    if den <= f64::MIN_POSITIVE {
        return (0.0, [0.0; 3]);
    }
    let cov = num / den;
    let grad = [
        (dnum[0] - cov * dden[0]) / den,
        (dnum[1] - cov * dden[1]) / den,
        (dnum[2] - cov * dden[2]) / den,
    ];
    (cov, grad)
}

/// Sum of per-pose coverage; each pose contributes a value in `[0, 1]`.
pub fn coverage(field: &ScalarField, poses: &[Pose], steepness: f64) -> f64 {
    poses
        .iter()
        .map(|p| pose_coverage(field, p, steepness).0)
        .sum()
}

/// Per-pose coverage values.
pub fn coverage_per_pose(field: &ScalarField, poses: &[Pose], steepness: f64) -> Vec<f64> {
    poses
        .iter()
        .map(|p| pose_coverage(field, p, steepness).0)
        .collect()
}

/// Population variance of the `[0, π)`-normalized pose angles.
pub fn angle_variance(poses: &[Pose]) -> f64 {
    if poses.len() < 2 {
        return 0.0;
    }
    let thetas: Vec<f64> = poses.iter().map(|p| p.theta.rem_euclid(PI)).collect();
    let k = thetas.len() as f64;
    let mean = thetas.iter().sum::<f64>() / k;
    thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / k
}

/// Unnormalized product integral of the tip Gaussians of two poses.
fn gaussian_product(a: &Pose, b: &Pose) -> f64 {
    let (sa, sb) = (a.footprint.tip_radius_px, b.footprint.tip_radius_px);
    let s2 = sa * sa + sb * sb;
    let c = 2.0 * PI * sa * sa * sb * sb / s2;
    let tb = tip_positions(b);
    tip_positions(a)
        .iter()
        .map(|&(ax, ay)| {
            tb.iter()
                .map(|&(bx, by)| (-((ax - bx).powi(2) + (ay - by).powi(2)) / (2.0 * s2)).exp())
                .sum::<f64>()
        })
        .sum::<f64>()
        * c
}

/// Self product integral; depends only on the footprint, not on the pose.
fn self_product(p: &Pose) -> f64 {
    let s = p.footprint.tip_radius_px;
    let offs = tip_offsets(&p.footprint);
    let mut acc = 0.0;
    for a in &offs {
        for b in &offs {
            acc += (-(a - b).powi(2) / (4.0 * s * s)).exp();
        }
    }
    PI * s * s * acc
}

/// Normalized overlap of two poses: `⟨gᵢ, gⱼ⟩ / sqrt(⟨gᵢ, gᵢ⟩⟨gⱼ, gⱼ⟩)`.
pub fn pair_overlap(a: &Pose, b: &Pose) -> f64 {
    gaussian_product(a, b) / (self_product(a) * self_product(b)).sqrt()
}

/// Gradients of `pair_overlap(a, b)` with respect to the parameters of `a` and of `b`.
fn pair_overlap_grad(a: &Pose, b: &Pose) -> (f64, [f64; 3], [f64; 3]) {
    let (sa, sb) = (a.footprint.tip_radius_px, b.footprint.tip_radius_px);
    let s2 = sa * sa + sb * sb;
    let c = 2.0 * PI * sa * sa * sb * sb / s2;
    let norm = 1.0 / (self_product(a) * self_product(b)).sqrt();
    let (sin_a, cos_a) = a.theta.sin_cos();
    let (sin_b, cos_b) = b.theta.sin_cos();
    let (oa, ob) = (tip_offsets(&a.footprint), tip_offsets(&b.footprint));
    let (ta, tb) = (tip_positions(a), tip_positions(b));
    let mut value = 0.0;
    let mut ga = [0.0; 3];
    let mut gb = [0.0; 3];
    for (&(ax, ay), &offa) in ta.iter().zip(&oa) {
        for (&(bx, by), &offb) in tb.iter().zip(&ob) {
            let (dx, dy) = (ax - bx, ay - by);
            let e = c * norm * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
            value += e;
            // ∂e/∂tip_a = -e (a - b) / s², ∂e/∂tip_b = +e (a - b) / s²
            let (ex, ey) = (-e * dx / s2, -e * dy / s2);
            ga[0] += ex;
            ga[1] += ey;
            ga[2] += ex * (-offa * sin_a) + ey * (offa * cos_a);
            gb[0] -= ex;
            gb[1] -= ey;
            gb[2] -= ex * (-offb * sin_b) + ey * (offb * cos_b);
        }
    }
    (value, ga, gb)
}

/// Sum of pairwise overlaps; zero for fewer than two poses.
pub fn overlap(poses: &[Pose]) -> f64 {
    let mut acc = 0.0;
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            acc += pair_overlap(&poses[i], &poses[j]);
        }
    }
    acc
}

/// Largest pairwise overlap in the set.
pub fn max_pair_overlap(poses: &[Pose]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            worst = worst.max(pair_overlap(&poses[i], &poses[j]));
        }
    }
    worst
}

/// Evaluates the full objective with analytic gradients.
pub fn evaluate(field: &ScalarField, poses: &[Pose], w: &LossWeights) -> Result<LossReport, LossError> {
    if poses.is_empty() {
        return Err(LossError::NoPoses);
    }
    let k = poses.len();
    let mut grad = vec![[0.0; 3]; k];

    let mut coverage_term = 0.0;
    for (i, p) in poses.iter().enumerate() {
        let (c, g) = pose_coverage(field, p, w.sigmoid_steepness);
        coverage_term += c;
        for d in 0..3 {
            grad[i][d] -= w.w_coverage * g[d];
        }
    }

    let angle_term = angle_variance(poses);
    if k > 1 {
        let thetas: Vec<f64> = poses.iter().map(|p| p.theta.rem_euclid(PI)).collect();
        let mean = thetas.iter().sum::<f64>() / k as f64;
        for (i, t) in thetas.iter().enumerate() {
            grad[i][2] -= w.w_angle * 2.0 * (t - mean) / k as f64;
        }
    }

    let mut overlap_term = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let (v, gi, gj) = pair_overlap_grad(&poses[i], &poses[j]);
            overlap_term += v;
            for d in 0..3 {
                grad[i][d] += w.w_overlap * gi[d];
                grad[j][d] += w.w_overlap * gj[d];
            }
        }
    }

    let total = -w.w_coverage * coverage_term - w.w_angle * angle_term + w.w_overlap * overlap_term;
    if !total.is_finite() {
        return Err(LossError::NonFinite("loss"));
    }
    if grad.iter().flatten().any(|g| !g.is_finite()) {
        return Err(LossError::NonFinite("gradient"));
    }
    Ok(LossReport {
        total,
        coverage_term,
        angle_term,
        overlap_term,
        grad,
    })
}

/// Loss value only (no gradient bookkeeping beyond what coverage needs).
pub fn loss_value(field: &ScalarField, poses: &[Pose], w: &LossWeights) -> Result<f64, LossError> {
    if poses.is_empty() {
        return Err(LossError::NoPoses);
    }
    let total = -w.w_coverage * coverage(field, poses, w.sigmoid_steepness)
        - w.w_angle * angle_variance(poses)
        + w.w_overlap * overlap(poses);
    if total.is_finite() {
        Ok(total)
    } else {
        Err(LossError::NonFinite("loss"))
    }
}

/// A pose is valid when the field is at least `tau` at every tip.
pub fn is_valid(field: &ScalarField, pose: &Pose, tau: f64) -> bool {
    tip_positions(pose)
        .iter()
        .all(|&(x, y)| field.sample(x, y) >= tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{smooth, synth, ProbeFootprint};

    fn blob(x: f64, y: f64, theta: f64) -> Pose {
        Pose::new(x, y, theta, ProbeFootprint::single(2.0))
    }

    fn uniform_field(n: usize) -> ScalarField {
        ScalarField::from_values("u", n, n, vec![1.0; n * n], 3.0).unwrap()
    }

    #[test]
    fn saturated_interior_coverage() {
        let f = uniform_field(64);
        assert!(coverage(&f, &[blob(32.0, 32.0, 0.0)], 10.0) > 0.99);
    }

    #[test]
    fn far_outside_coverage_vanishes() {
        let mask = synth::disk("d", 128, 128, (20.0, 20.0), 8.0);
        let f = smooth(&mask, 3.0).unwrap();
        assert!(coverage(&f, &[blob(110.0, 110.0, 0.0)], 10.0) < 0.01);
    }

    #[test]
    fn equal_angles_have_zero_variance() {
        let p: Vec<Pose> = (0..3).map(|i| blob(i as f64, 0.0, 0.7)).collect();
        assert!(angle_variance(&p).abs() < 1e-15);
        assert_eq!(angle_variance(&p[..1]), 0.0);
    }

    #[test]
    fn two_point_variance_is_pi_squared_over_sixteen() {
        let p = [blob(0.0, 0.0, 0.0), blob(0.0, 0.0, PI / 2.0)];
        assert!((angle_variance(&p) - PI * PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_poses_overlap_fully() {
        let p = blob(10.0, 10.0, 0.3);
        assert!((pair_overlap(&p, &p) - 1.0).abs() < 1e-12);
        let q = Pose::new(10.0, 10.0, 0.3, ProbeFootprint::default());
        assert!((pair_overlap(&q, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distant_poses_do_not_overlap() {
        let a = blob(0.0, 0.0, 0.0);
        let b = blob(40.0, 0.0, 0.0);
        assert!(pair_overlap(&a, &b) < 1e-8);
        assert_eq!(overlap(&[a]), 0.0);
    }

    #[test]
    fn single_pose_report_has_no_overlap_term() {
        let mask = synth::disk("d", 48, 48, (24.0, 24.0), 10.0);
        let f = smooth(&mask, 3.0).unwrap();
        let r = evaluate(&f, &[blob(24.0, 24.0, 1.0)], &LossWeights::default()).unwrap();
        assert_eq!(r.overlap_term, 0.0);
        assert_eq!(r.angle_term, 0.0);
        assert!(r.grad[0][0].abs() < 1e-6 && r.grad[0][1].abs() < 1e-6);
        assert_eq!(r.grad[0][2], 0.0);
    }

    #[test]
    fn empty_pose_set_is_an_error() {
        let f = uniform_field(8);
        assert_eq!(evaluate(&f, &[], &LossWeights::default()), Err(LossError::NoPoses));
    }

    #[test]
    fn huge_steepness_is_reported_not_propagated() {
        let f = uniform_field(16);
        let w = LossWeights {
            sigmoid_steepness: f64::INFINITY,
            ..LossWeights::default()
        };
        assert!(matches!(
            evaluate(&f, &[blob(8.0, 8.0, 0.0)], &w),
            Err(LossError::NonFinite(_))
        ));
    }

    #[test]
    fn validity_follows_the_threshold() {
        let mask = synth::disk("d", 64, 64, (32.0, 32.0), 20.0);
        let f = smooth(&mask, 3.0).unwrap();
        assert!(is_valid(&f, &blob(32.0, 32.0, 0.0), 0.5));
        assert!(!is_valid(&f, &blob(2.0, 2.0, 0.0), 0.5));
    }
}
