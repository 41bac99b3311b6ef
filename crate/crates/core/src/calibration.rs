//! Camera → image → robot rectification and end-effector kinematics.
//!
//! A [`FrameCalibration`] chains two homographies and then adds a residual
//! correction interpolated from measured anchors ([`CorrectionMesh`]).
//! Angles at the kinematics boundary are in degrees.

use delaunator::{triangulate, Point};
use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CALIB_VERSION: u32 = 1;

const DET_EPS: f64 = 1e-9;
const W_EPS: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("homography is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("point maps to the line at infinity (w = {0:e})")]
    DegenerateProjection(f64),
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration: {0}")]
    Degenerate(&'static str),
    #[error("led spacing needs d1 > D >= 0 (d1 = {d1}, D = {d})")]
    ImaginarySpacing { d1: f64, d: f64 },
    #[error("unsupported calibration version {0}")]
    Version(u32),
    #[error("calibration file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Applies a homography to an inhomogeneous point.
pub fn apply_homography(h: &Matrix3<f64>, p: [f64; 2]) -> Result<[f64; 2], CalibrationError> {
    let v = h * Vector3::new(p[0], p[1], 1.0);
    if v.z.abs() < W_EPS {
        return Err(CalibrationError::DegenerateProjection(v.z));
    }
    Ok([v.x / v.z, v.y / v.z])
}

/// One measured residual: where the rectified point landed versus where it should be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshAnchor {
    pub image_xy: [f64; 2],
    pub residual_mm: [f64; 2],
}

/// Piecewise-linear residual field over a Delaunay triangulation of the anchors.
///
/// Outside the convex hull the nearest anchor's residual is used.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionMesh {
    anchors: Vec<MeshAnchor>,
    triangles: Vec<[usize; 3]>,
}

impl CorrectionMesh {
    pub fn anchors(&self) -> &[MeshAnchor] {
        &self.anchors
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn residual(&self, q: [f64; 2]) -> [f64; 2] {
        for t in &self.triangles {
            if let Some(b) = self.barycentric(t, q) {
                let mut r = [0.0; 2];
                for (w, &i) in b.iter().zip(t) {
                    r[0] += w * self.anchors[i].residual_mm[0];
                    r[1] += w * self.anchors[i].residual_mm[1];
                }
                return r;
            }
        }
        let nearest = self
            .anchors
            .iter()
            .min_by(|a, b| dist2(a.image_xy, q).total_cmp(&dist2(b.image_xy, q)))
            .expect("mesh has anchors");
        nearest.residual_mm
    }

    fn barycentric(&self, t: &[usize; 3], q: [f64; 2]) -> Option<[f64; 3]> {
        let [a, b, c] = t.map(|i| self.anchors[i].image_xy);
        let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
        if det.abs() < 1e-300 {
            return None;
        }
        let l1 = ((b[1] - c[1]) * (q[0] - c[0]) + (c[0] - b[0]) * (q[1] - c[1])) / det;
        let l2 = ((c[1] - a[1]) * (q[0] - c[0]) + (a[0] - c[0]) * (q[1] - c[1])) / det;
        let l3 = 1.0 - l1 - l2;
        let eps = -1e-12;
        (l1 >= eps && l2 >= eps && l3 >= eps).then_some([l1, l2, l3])
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Triangulates residual anchors. Requires 4+ anchors that are not all collinear.
pub fn build_mesh(anchors: &[MeshAnchor]) -> Result<CorrectionMesh, CalibrationError> {
    if anchors.len() < 4 {
        return Err(CalibrationError::TooFewPoints(anchors.len()));
    }
    let points: Vec<Point> = anchors
        .iter()
        .map(|a| Point {
            x: a.image_xy[0],
            y: a.image_xy[1],
        })
        .collect();
    let tri = triangulate(&points);
    if tri.triangles.is_empty() {
        return Err(CalibrationError::Degenerate("all mesh anchors are collinear"));
    }
    let triangles = tri
        .triangles
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(CorrectionMesh {
        anchors: anchors.to_vec(),
        triangles,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCalibration {
    cam_to_img: Matrix3<f64>,
    img_to_robot: Matrix3<f64>,
    cam_from_img: Matrix3<f64>,
    img_from_robot: Matrix3<f64>,
    mesh: Option<CorrectionMesh>,
}

impl Default for FrameCalibration {
    fn default() -> Self {
        FrameCalibration::new(Matrix3::identity(), Matrix3::identity(), None)
            .expect("identity is invertible")
    }
}

impl FrameCalibration {
    pub fn new(
        cam_to_img: Matrix3<f64>,
        img_to_robot: Matrix3<f64>,
        mesh: Option<CorrectionMesh>,
    ) -> Result<Self, CalibrationError> {
        let invert = |m: &Matrix3<f64>| {
            let det = m.determinant();
            if det.abs() <= DET_EPS || !det.is_finite() {
                return Err(CalibrationError::Singular(det));
            }
            m.try_inverse().ok_or(CalibrationError::Singular(det))
        };
        Ok(FrameCalibration {
            cam_from_img: invert(&cam_to_img)?,
            img_from_robot: invert(&img_to_robot)?,
            cam_to_img,
            img_to_robot,
            mesh,
        })
    }

    /// Pure scale-and-offset image → robot map with no camera stage.
    pub fn from_scale(scale_mm_per_px: f64, origin_mm: [f64; 2]) -> Result<Self, CalibrationError> {
        let k = Matrix3::new(
            scale_mm_per_px,
            0.0,
            origin_mm[0],
            0.0,
            scale_mm_per_px,
            origin_mm[1],
            0.0,
            0.0,
            1.0,
        );
        FrameCalibration::new(Matrix3::identity(), k, None)
    }

    pub fn cam_to_img(&self) -> &Matrix3<f64> {
        &self.cam_to_img
    }

    pub fn img_to_robot(&self) -> &Matrix3<f64> {
        &self.img_to_robot
    }

    pub fn mesh(&self) -> Option<&CorrectionMesh> {
        self.mesh.as_ref()
    }

    /// Camera point → robot millimeters: both homographies, then the mesh residual.
    pub fn rectify(&self, p_cam: [f64; 2]) -> Result<[f64; 2], CalibrationError> {
        let img = apply_homography(&self.cam_to_img, p_cam)?;
        let mut robot = apply_homography(&self.img_to_robot, img)?;
        if let Some(mesh) = &self.mesh {
            let r = mesh.residual(img);
            robot[0] += r[0];
            robot[1] += r[1];
        }
        Ok(robot)
    }

    /// Homography chain only, without the mesh residual.
    pub fn rectify_homography(&self, p_cam: [f64; 2]) -> Result<[f64; 2], CalibrationError> {
        let img = apply_homography(&self.cam_to_img, p_cam)?;
        apply_homography(&self.img_to_robot, img)
    }

    /// Inverse of [`rectify_homography`](Self::rectify_homography).
    pub fn unrectify_homography(&self, p_robot: [f64; 2]) -> Result<[f64; 2], CalibrationError> {
        let img = apply_homography(&self.img_from_robot, p_robot)?;
        apply_homography(&self.cam_from_img, img)
    }

    /// Direction (radians) of a camera-frame heading after rectification at `p_cam`.
    pub fn rectify_heading(&self, p_cam: [f64; 2], theta: f64) -> Result<f64, CalibrationError> {
        let h = 1e-3;
        let (s, c) = theta.sin_cos();
        let a = self.rectify_homography([p_cam[0] - h * c, p_cam[1] - h * s])?;
        let b = self.rectify_homography([p_cam[0] + h * c, p_cam[1] + h * s])?;
        Ok((b[1] - a[1]).atan2(b[0] - a[0]))
    }

    pub fn to_file(&self) -> CalibrationFile {
        let rows = |m: &Matrix3<f64>| {
            let mut v = [0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    v[r * 3 + c] = m[(r, c)];
                }
            }
            v
        };
        CalibrationFile {
            calib_version: CALIB_VERSION,
            k_cam_img: rows(&self.cam_to_img),
            k_img_robot: rows(&self.img_to_robot),
            mesh: self.mesh.as_ref().map(|m| m.anchors.clone()).unwrap_or_default(),
        }
    }

    pub fn from_file(file: &CalibrationFile) -> Result<Self, CalibrationError> {
        if file.calib_version != CALIB_VERSION {
            return Err(CalibrationError::Version(file.calib_version));
        }
        let mesh = if file.mesh.is_empty() {
            None
        } else {
            Some(build_mesh(&file.mesh)?)
        };
        FrameCalibration::new(
            Matrix3::from_row_slice(&file.k_cam_img),
            Matrix3::from_row_slice(&file.k_img_robot),
            mesh,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path)?;
        FrameCalibration::from_file(&serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// On-disk calibration: row-major matrices plus the residual anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub calib_version: u32,
    pub k_cam_img: [f64; 9],
    pub k_img_robot: [f64; 9],
    #[serde(default)]
    pub mesh: Vec<MeshAnchor>,
}

/// Hartley normalization: centroid to origin, mean distance √2.
fn normalizer(points: &[[f64; 2]]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_d = points
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_d > 0.0 {
        std::f64::consts::SQRT_2 / mean_d
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2], scale: f64) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    cross.abs() <= 1e-10 * scale
}

/// Normalized DLT over all pairs `(src, dst)`, refined by Gauss-Newton on
/// the reprojection error in `dst`. Exact for 4 points in general position.
pub fn fit_homography(pairs: &[([f64; 2], [f64; 2])]) -> Result<Matrix3<f64>, CalibrationError> {
    if pairs.len() < 4 {
        return Err(CalibrationError::TooFewPoints(pairs.len()));
    }
    let src: Vec<[f64; 2]> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<[f64; 2]> = pairs.iter().map(|p| p.1).collect();
    if pairs.len() == 4 {
        for pts in [&src, &dst] {
            let extent = pts
                .iter()
                .flat_map(|p| p.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(1.0);
            for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
                if collinear(pts[i], pts[j], pts[k], extent * extent) {
                    return Err(CalibrationError::Degenerate("three of four points are collinear"));
                }
            }
        }
    }
    let ts = normalizer(&src);
    let td = normalizer(&dst);
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let sn = apply_homography(&ts, *s)?;
        let dn = apply_homography(&td, *d)?;
        let (x, y, u, v) = (sn[0], sn[1], dn[0], dn[1]);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(CalibrationError::Degenerate("SVD failed"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (min_i, next_i) = (order[0], order[1]);
    let largest = sv[order[sv.len() - 1]];
    if sv[next_i] <= 1e-10 * largest {
        return Err(CalibrationError::Degenerate("correspondences do not determine a homography"));
    }
    let h = v_t.row(min_i);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(CalibrationError::Singular(0.0))?;
    let mut hm = td_inv * hn * ts;
    if hm[(2, 2)].abs() > 1e-300 {
        hm /= hm[(2, 2)];
    }
    if pairs.len() > 4 {
        hm = refine_homography(hm, &src, &dst);
    }
    Ok(hm)
}

pub fn reprojection_rms(h: &Matrix3<f64>, pairs: &[([f64; 2], [f64; 2])]) -> f64 {
    let mut acc = 0.0;
    for (s, d) in pairs {
        match apply_homography(h, *s) {
            Ok(p) => acc += dist2(p, *d),
            Err(_) => return f64::INFINITY,
        }
    }
    (acc / pairs.len() as f64).sqrt()
}

fn refine_homography(h0: Matrix3<f64>, src: &[[f64; 2]], dst: &[[f64; 2]]) -> Matrix3<f64> {
    let pairs: Vec<_> = src.iter().copied().zip(dst.iter().copied()).collect();
    let mut h = h0;
    let mut rms = reprojection_rms(&h, &pairs);
    for _ in 0..10 {
        // parameters: the 8 entries other than h22 (fixed to 1)
        let mut jtj = nalgebra::SMatrix::<f64, 8, 8>::zeros();
        let mut jtr = nalgebra::SVector::<f64, 8>::zeros();
        for (s, d) in src.iter().zip(dst) {
            let v = h * Vector3::new(s[0], s[1], 1.0);
            let (x, y, w) = (v.x, v.y, v.z);
            let (u, vv) = (x / w, y / w);
            let basis = [s[0], s[1], 1.0];
            let mut ju = nalgebra::SVector::<f64, 8>::zeros();
            let mut jv = nalgebra::SVector::<f64, 8>::zeros();
            for c in 0..3 {
                ju[c] = basis[c] / w;
                jv[3 + c] = basis[c] / w;
            }
            for c in 0..2 {
                ju[6 + c] = -u * basis[c] / w;
                jv[6 + c] = -vv * basis[c] / w;
            }
            let (ru, rv) = (u - d[0], vv - d[1]);
            jtj += ju * ju.transpose() + jv * jv.transpose();
            jtr += ju * ru + jv * rv;
        }
        let Some(delta) = jtj.lu().solve(&jtr) else { break };
        let mut cand = h;
        for i in 0..8 {
            cand[(i / 3, i % 3)] -= delta[i];
        }
        let cand_rms = reprojection_rms(&cand, &pairs);
        if cand_rms < rms {
            h = cand;
            let improved = rms - cand_rms;
            rms = cand_rms;
            if improved < 1e-15 {
                break;
            }
        } else {
            break;
        }
    }
    h
}

/// Single-pivot end effector: the contact point sits `arm_length_mm` from the pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorGeometry {
    pub arm_length_mm: f64,
}

impl Default for EffectorGeometry {
    fn default() -> Self {
        EffectorGeometry {
            arm_length_mm: 30.0,
        }
    }
}

/// Commanded robot position and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorTarget {
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
}

/// Robot target that puts the contact point on `(x0, y0)` at yaw `theta0_deg`.
///
/// `x_t = x0 - R0 cos(90° - θ0)`, `y_t = y0 - R0 + R0 sin(90° - θ0)`, `θ_t = θ0`.
pub fn effector_target(x0: f64, y0: f64, theta0_deg: f64, geom: &EffectorGeometry) -> EffectorTarget {
    let r0 = geom.arm_length_mm;
    // cos(90° - θ) = sin θ and sin(90° - θ) = cos θ; this form is exact at θ = 0
    let (s, c) = theta0_deg.to_radians().sin_cos();
    EffectorTarget {
        x: x0 - r0 * s,
        y: y0 - r0 * (1.0 - c),
        theta_deg: theta0_deg,
    }
}

/// Forward model: the pivot sits `R0` along +y from the commanded position and
/// the arm `(0, -R0)` is rotated by the yaw about it.
pub fn contact_point(target: &EffectorTarget, geom: &EffectorGeometry) -> [f64; 2] {
    let r0 = geom.arm_length_mm;
    let (s, c) = target.theta_deg.to_radians().sin_cos();
    let pivot = [target.x, target.y + r0];
    // rotate (0, -R0) by theta: (R0 sin θ, -R0 cos θ)
    [pivot[0] + r0 * s, pivot[1] - r0 * c]
}

/// Back-LED distance that matches the front LED's illumination: `sqrt(d1² - D²)`.
pub fn led_spacing(d1: f64, d: f64) -> Result<f64, CalibrationError> {
    if !(d1 > d && d >= 0.0) {
        return Err(CalibrationError::ImaginarySpacing { d1, d });
    }
    Ok((d1 * d1 - d * d).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_calibration_is_a_no_op() {
        let c = FrameCalibration::default();
        assert_eq!(c.rectify([3.5, -2.0]).unwrap(), [3.5, -2.0]);
    }

    #[test]
    fn pure_scale_scales() {
        let c = FrameCalibration::new(Matrix3::identity(), Matrix3::from_diagonal(&Vector3::new(2.5, 2.5, 1.0)), None).unwrap();
        let p = c.rectify([4.0, 6.0]).unwrap();
        assert!((p[0] - 10.0).abs() < 1e-12 && (p[1] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = 0.0;
        m[(1, 1)] = 0.0;
        assert!(matches!(
            FrameCalibration::new(m, Matrix3::identity(), None),
            Err(CalibrationError::Singular(_))
        ));
    }

    #[test]
    fn point_at_infinity_is_an_error() {
        let h = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        assert!(matches!(
            apply_homography(&h, [0.0, 5.0]),
            Err(CalibrationError::DegenerateProjection(_))
        ));
    }

    #[test]
    fn unit_square_maps_to_identity() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let pairs: Vec<_> = sq.iter().map(|&p| (p, p)).collect();
        let h = fit_homography(&pairs).unwrap();
        let h = h / h[(2, 2)];
        assert!((h - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn affine_corners_are_recovered() {
        let m = Matrix3::new(2.0, 0.3, 5.0, -0.4, 1.5, -7.0, 0.0, 0.0, 1.0);
        let sq = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]];
        let pairs: Vec<_> = sq.iter().map(|&p| (p, apply_homography(&m, p).unwrap())).collect();
        let h = fit_homography(&pairs).unwrap();
        assert!((h / h[(2, 2)] - m).abs().max() < 1e-9);
    }

    #[test]
    fn collinear_quad_is_degenerate() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 1.0]];
        let pairs: Vec<_> = pts.iter().map(|&p| (p, p)).collect();
        assert!(matches!(fit_homography(&pairs), Err(CalibrationError::Degenerate(_))));
        assert!(matches!(fit_homography(&pairs[..3]), Err(CalibrationError::TooFewPoints(3))));
    }

    fn grid_anchors(residual: impl Fn(f64, f64) -> [f64; 2]) -> Vec<MeshAnchor> {
        let mut v = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                let p = [i as f64 * 50.0, j as f64 * 40.0];
                v.push(MeshAnchor {
                    image_xy: p,
                    residual_mm: residual(p[0], p[1]),
                });
            }
        }
        v
    }

    #[test]
    fn zero_residual_mesh_is_zero_everywhere() {
        let mesh = build_mesh(&grid_anchors(|_, _| [0.0, 0.0])).unwrap();
        for q in [[10.0, 10.0], [99.0, 79.0], [-50.0, 300.0]] {
            assert_eq!(mesh.residual(q), [0.0, 0.0]);
        }
    }

    #[test]
    fn mesh_is_exact_at_anchors_and_nearest_outside() {
        let anchors = grid_anchors(|x, y| [0.01 * x, -0.02 * y + 0.1]);
        let mesh = build_mesh(&anchors).unwrap();
        for a in &anchors {
            let r = mesh.residual(a.image_xy);
            assert!((r[0] - a.residual_mm[0]).abs() < 1e-12);
            assert!((r[1] - a.residual_mm[1]).abs() < 1e-12);
        }
        assert_eq!(mesh.residual([500.0, 500.0]), anchors[8].residual_mm);
    }

    #[test]
    fn collinear_anchors_are_rejected() {
        let anchors: Vec<_> = (0..5)
            .map(|i| MeshAnchor {
                image_xy: [i as f64, 2.0 * i as f64],
                residual_mm: [0.0, 0.0],
            })
            .collect();
        assert!(matches!(build_mesh(&anchors), Err(CalibrationError::Degenerate(_))));
    }

    #[test]
    fn zero_yaw_target_is_the_input() {
        let g = EffectorGeometry { arm_length_mm: 30.0 };
        let t = effector_target(10.0, 20.0, 0.0, &g);
        assert_eq!((t.x, t.y, t.theta_deg), (10.0, 20.0, 0.0));
    }

    #[test]
    fn quarter_turn_target() {
        let g = EffectorGeometry { arm_length_mm: 30.0 };
        let t = effector_target(10.0, 20.0, 90.0, &g);
        assert!((t.x - (10.0 - 30.0)).abs() < 1e-12);
        assert!((t.y - (20.0 - 30.0)).abs() < 1e-12);
        let c = contact_point(&t, &g);
        assert!((c[0] - 10.0).abs() < 1e-12 && (c[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn led_spacing_triples() {
        assert_eq!(led_spacing(7.0, 0.0).unwrap(), 7.0);
        assert!((led_spacing(5.0, 3.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((led_spacing(10.0, 6.0).unwrap() - 8.0).abs() < 1e-15);
        assert!(led_spacing(3.0, 3.0).is_err());
        assert!(led_spacing(3.0, -1.0).is_err());
    }

    #[test]
    fn calibration_file_round_trips() {
        let m = Matrix3::new(1.1, 0.01, 3.0, -0.02, 0.95, 4.0, 1e-5, 2e-5, 1.0);
        let mesh = build_mesh(&grid_anchors(|x, _| [0.001 * x, 0.0])).unwrap();
        let c = FrameCalibration::new(m, Matrix3::identity() * 0.2, Some(mesh)).unwrap();
        let json = serde_json::to_string(&c.to_file()).unwrap();
        assert!(json.contains("\"calib_version\":1"));
        let back = FrameCalibration::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.rectify([12.0, 30.0]).unwrap(), c.rectify([12.0, 30.0]).unwrap());
    }
}
