use approx::assert_abs_diff_eq;
use contactmap::calibration::{
    apply_homography, build_mesh, contact_point, effector_target, fit_homography, led_spacing, reprojection_rms,
    CalibrationError, EffectorGeometry, FrameCalibration, MeshAnchor,
};
use nalgebra::{Matrix3, Point2, Rotation2, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_homography(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let mut j = |s: f64| rng.random_range(-s..s);
    Matrix3::new(
        1.0 + j(0.2),
        j(0.2),
        j(20.0),
        j(0.2),
        1.0 + j(0.2),
        j(20.0),
        j(1e-3),
        j(1e-3),
        1.0,
    )
}

fn project(h: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = h * Vector3::new(p[0], p[1], 1.0);
    [v.x / v.z, v.y / v.z]
}

#[test]
fn rectify_matches_stepwise_multiplication() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (a, b) = (random_homography(&mut rng), random_homography(&mut rng));
        let c = FrameCalibration::new(a, b, None).unwrap();
        let p = [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)];
        let want = project(&b, project(&a, p));
        let got = c.rectify(p).unwrap();
        assert_abs_diff_eq!(got[0], want[0], epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], want[1], epsilon = 1e-12);
    }
}

#[test]
fn four_corners_recover_the_map() {
    let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let id = fit_homography(&sq.map(|p| (p, p))).unwrap();
    assert!((id - Matrix3::identity()).abs().max() < 1e-9);
    let aff = Matrix3::new(2.0, 0.5, 3.0, -0.25, 1.5, -1.0, 0.0, 0.0, 1.0);
    let h = fit_homography(&sq.map(|p| (p, project(&aff, p)))).unwrap();
    assert!((h - aff).abs().max() < 1e-9, "{h}");
}

#[test]
fn noisy_pairs_fit_below_a_third_of_a_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth = random_homography(&mut rng);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let pairs: Vec<_> = (0..15)
        .map(|_| {
            let s = [rng.random_range(0.0..300.0), rng.random_range(0.0..300.0)];
            let d = project(&truth, s);
            (s, [d[0] + noise.sample(&mut rng), d[1] + noise.sample(&mut rng)])
        })
        .collect();
    let h = fit_homography(&pairs).unwrap();
    assert!(reprojection_rms(&h, &pairs) < 0.3);
}

#[test]
fn degenerate_fits_are_errors() {
    let line: Vec<_> = (0..4).map(|i| ([i as f64, i as f64], [i as f64, 0.0])).collect();
    assert!(matches!(fit_homography(&line), Err(CalibrationError::Degenerate(_))));
    assert!(matches!(fit_homography(&line[..3]), Err(CalibrationError::TooFewPoints(3))));
}

fn anchors(seed: u64) -> Vec<MeshAnchor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..12)
        .map(|_| MeshAnchor {
            image_xy: [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)],
            residual_mm: [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
        })
        .collect()
}

#[test]
fn mesh_interpolation_examples() {
    let a = anchors(4);
    let mesh = build_mesh(&a).unwrap();
    for x in &a {
        assert_eq!(mesh.residual(x.image_xy), x.residual_mm);
    }
    for t in mesh.triangles() {
        let v = t.map(|i| a[i]);
        let c = [
            (v[0].image_xy[0] + v[1].image_xy[0] + v[2].image_xy[0]) / 3.0,
            (v[0].image_xy[1] + v[1].image_xy[1] + v[2].image_xy[1]) / 3.0,
        ];
        let r = mesh.residual(c);
        for k in 0..2 {
            let mean = (v[0].residual_mm[k] + v[1].residual_mm[k] + v[2].residual_mm[k]) / 3.0;
            assert_abs_diff_eq!(r[k], mean, epsilon = 1e-12);
        }
    }
    let zero: Vec<_> = a.iter().map(|x| MeshAnchor { residual_mm: [0.0; 2], ..*x }).collect();
    let z = build_mesh(&zero).unwrap();
    assert_eq!(z.residual([50.0, 50.0]), [0.0, 0.0]);
    assert_eq!(z.residual([-500.0, 900.0]), [0.0, 0.0]);
    let collinear: Vec<_> = (0..5)
        .map(|i| MeshAnchor { image_xy: [i as f64, 2.0 * i as f64], residual_mm: [0.1, 0.0] })
        .collect();
    assert!(build_mesh(&collinear).is_err());
}

#[test]
fn effector_examples() {
    let g = EffectorGeometry { arm_length_mm: 30.0 };
    let t = effector_target(12.0, 7.0, 0.0, &g);
    assert_eq!((t.x, t.y), (12.0, 7.0));
    let t = effector_target(12.0, 7.0, 90.0, &g);
    assert_abs_diff_eq!(t.x, 12.0 - 30.0, epsilon = 1e-12);
    assert_abs_diff_eq!(t.y, 7.0 - 30.0, epsilon = 1e-12);
    assert_eq!(led_spacing(7.0, 0.0).unwrap(), 7.0);
    assert_eq!(led_spacing(5.0, 3.0).unwrap(), 4.0);
    assert!(matches!(led_spacing(3.0, 3.0), Err(CalibrationError::ImaginarySpacing { .. })));
}

#[test]
fn calibration_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mesh = build_mesh(&anchors(9)).unwrap();
    let c = FrameCalibration::new(random_homography(&mut rng), random_homography(&mut rng), Some(mesh)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calibration.json");
    c.save(&path).unwrap();
    let back = FrameCalibration::load(&path).unwrap();
    assert_eq!(back.rectify([10.0, 20.0]).unwrap(), c.rectify([10.0, 20.0]).unwrap());
    assert_eq!(back.cam_to_img(), c.cam_to_img());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rectification_inverts_on_a_grid(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = FrameCalibration::new(random_homography(&mut rng), random_homography(&mut rng), None).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let p = [i as f64 * 20.0, j as f64 * 20.0];
                let q = c.unrectify_homography(c.rectify_homography(p).unwrap()).unwrap();
                prop_assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn refit_on_exact_output_is_lossless(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_homography(&mut rng);
        let pairs: Vec<_> = (0..10)
            .map(|_| {
                let s = [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)];
                (s, apply_homography(&h, s).unwrap())
            })
            .collect();
        let fit = fit_homography(&pairs).unwrap();
        prop_assert!(reprojection_rms(&fit, &pairs) < 1e-9);
    }

    #[test]
    fn mesh_never_exceeds_its_largest_anchor(seed in 0u64..10_000, x in -50.0..150.0f64, y in -50.0..150.0f64) {
        let a = anchors(seed);
        let mesh = build_mesh(&a).unwrap();
        let r = mesh.residual([x, y]);
        for k in 0..2 {
            let lo = a.iter().map(|m| m.residual_mm[k]).fold(f64::INFINITY, f64::min);
            let hi = a.iter().map(|m| m.residual_mm[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r[k] >= lo - 1e-12 && r[k] <= hi + 1e-12);
        }
    }

    #[test]
    fn effector_contact_round_trip(x0 in -100.0..100.0f64, y0 in -100.0..100.0f64, theta in 0.0..180.0f64,
                                   r0 in 1.0..60.0f64) {
        let g = EffectorGeometry { arm_length_mm: r0 };
        let t = effector_target(x0, y0, theta, &g);
        prop_assert_eq!(t.theta_deg, theta);
        // the arm hangs R0 below a pivot R0 above the commanded point, then turns about it
        let pivot = Point2::new(t.x, t.y + r0);
        let tip = pivot + Rotation2::new(theta.to_radians()) * Vector2::new(0.0, -r0);
        prop_assert!((tip.x - x0).abs() < 1e-9 && (tip.y - y0).abs() < 1e-9);
        let c = contact_point(&t, &g);
        prop_assert!((c[0] - x0).abs() < 1e-9 && (c[1] - y0).abs() < 1e-9);
    }
}
