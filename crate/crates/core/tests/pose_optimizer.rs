use contactmap::field::{smooth, synth, Pose, ProbeFootprint, ScalarField};
use contactmap::loss::{is_valid, loss_value, max_pair_overlap, LossWeights};
use contactmap::optimizer::{
    batch_optimize, optimize, optimize_traced, stochastic_oracle, OptimizerConfig, MAX_PAIR_OVERLAP,
};
use proptest::prelude::*;

fn disk_at(id: &str, cx: f64, cy: f64, r: f64) -> ScalarField {
    smooth(&synth::disk(id, 64, 64, (cx, cy), r), 3.0).unwrap()
}

fn cfg(k: usize, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        k,
        seed,
        ..OptimizerConfig::default()
    }
}

#[test]
fn optimizer_is_deterministic() {
    let f = smooth(&synth::convex_segment("c", 64, 64, 3), 3.0).unwrap();
    let w = LossWeights::default();
    let a = optimize(&f, &cfg(3, 42), &w).unwrap();
    let b = optimize(&f, &cfg(3, 42), &w).unwrap();
    assert_eq!(a, b);
    let c = optimize(&f, &cfg(3, 43), &w).unwrap();
    assert_ne!(a.poses, c.poses);
}

#[test]
fn dense_oracle_finds_the_disk_center() {
    let f = disk_at("d", 30.0, 34.0, 8.0);
    let set = stochastic_oracle(&f, 10_000, &cfg(1, 5), &LossWeights::default()).unwrap();
    let p = set.poses[0];
    // within two smoothing widths of the centroid
    assert!((p.x - 30.0).hypot(p.y - 34.0) <= 6.0, "{p:?}");
    assert!(set.valid);
}

#[test]
fn single_pose_lands_on_the_grid_argmin() {
    let f = disk_at("d", 27.5, 33.0, 6.0);
    let w = LossWeights::default();
    let fp = ProbeFootprint::single(2.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for iy in 0..=160 {
        for ix in 0..=160 {
            let (x, y) = (12.0 + ix as f64 * 0.25, 12.0 + iy as f64 * 0.25);
            let l = loss_value(&f, &[Pose::new(x, y, 0.0, fp)], &w).unwrap();
            if l < best.0 {
                best = (l, x, y);
            }
        }
    }
    let p = optimize(&f, &cfg(1, 9), &w).unwrap().poses[0];
    assert!((p.x - best.1).hypot(p.y - best.2) <= 1.0, "{p:?} vs {best:?}");
}

#[test]
fn three_poses_fit_on_a_disk() {
    let f = disk_at("d", 32.0, 32.0, 20.0);
    let set = optimize(&f, &cfg(3, 1), &LossWeights::default()).unwrap();
    assert!(set.valid, "{set:?}");
    assert!(max_pair_overlap(&set.poses) < MAX_PAIR_OVERLAP);
}

#[test]
fn batch_keeps_input_order_and_per_segment_seeds() {
    let fields: Vec<ScalarField> = (0..6)
        .map(|i| smooth(&synth::convex_segment(format!("s{i}"), 48, 48, i), 3.0).unwrap())
        .collect();
    let w = LossWeights::default();
    let base = OptimizerConfig {
        restarts: 3,
        ..cfg(2, 77)
    };
    let out = batch_optimize(&fields, &base, &w);
    assert_eq!(out.len(), 6);
    for (i, r) in out.iter().enumerate() {
        let set = r.as_ref().unwrap();
        assert_eq!(set.segment_id, format!("s{i}"));
        let single = optimize(&fields[i], &OptimizerConfig { seed: 77 ^ i as u64, ..base }, &w).unwrap();
        assert_eq!(*set, single);
    }
    assert!(batch_optimize(&[], &base, &w).is_empty());
}

#[test]
fn thirty_five_disks_give_105_poses() {
    let fields: Vec<ScalarField> = (0..35)
        .map(|i| {
            let j = i as f64;
            disk_at(&format!("d{i}"), 30.0 + (j * 0.37) % 4.0, 30.0 + (j * 0.61) % 4.0, 19.0 + j % 3.0)
        })
        .collect();
    let out = batch_optimize(&fields, &cfg(3, 0), &LossWeights::default());
    let poses: usize = out.iter().map(|r| r.as_ref().unwrap().poses.len()).sum();
    assert_eq!(poses, 105);
    assert!(out.iter().all(|r| r.as_ref().unwrap().valid));
}

#[test]
fn trace_never_rises_within_a_phase() {
    let f = smooth(&synth::convex_segment("c", 64, 64, 11), 3.0).unwrap();
    let (_, trace) = optimize_traced(&f, &cfg(3, 4), &LossWeights::default()).unwrap();
    assert!(!trace.is_empty());
    for pair in trace.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.restart == b.restart && a.penalty_round == b.penalty_round {
            assert_eq!(b.iter, a.iter + 1);
            assert!(b.report.total <= a.report.total + 1e-12, "{} -> {}", a.report.total, b.report.total);
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let f = disk_at("d", 32.0, 32.0, 20.0);
    let w = LossWeights::default();
    for bad in [
        OptimizerConfig { k: 0, ..cfg(1, 0) },
        OptimizerConfig { tau: 1.5, ..cfg(1, 0) },
        OptimizerConfig { step_size: 0.0, ..cfg(1, 0) },
    ] {
        assert!(optimize(&f, &bad, &w).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn more_oracle_samples_never_hurt(seed in 0u64..1000, n in 1usize..40) {
        let f = smooth(&synth::convex_segment("c", 48, 48, seed), 3.0).unwrap();
        let w = LossWeights::default();
        let few = stochastic_oracle(&f, n, &cfg(2, seed), &w).unwrap();
        let many = stochastic_oracle(&f, n * 3, &cfg(2, seed), &w).unwrap();
        prop_assert!(many.final_loss.total <= few.final_loss.total);
    }

    #[test]
    fn optimizer_never_loses_to_its_seeding_oracle(seed in 0u64..1000) {
        let f = smooth(&synth::convex_segment("c", 48, 48, seed), 3.0).unwrap();
        let w = LossWeights::default();
        let c = OptimizerConfig { restarts: 2, ..cfg(3, seed) };
        let oracle = stochastic_oracle(&f, c.oracle_samples, &c, &w).unwrap();
        let opt = optimize(&f, &c, &w).unwrap();
        prop_assert!(opt.final_loss.total <= oracle.final_loss.total + 1e-12);
    }

    #[test]
    fn validity_flags_are_sound(seed in 0u64..1000, k in 1usize..4) {
        let f = smooth(&synth::convex_segment("c", 48, 48, seed), 3.0).unwrap();
        let c = OptimizerConfig { restarts: 2, ..cfg(k, seed) };
        let set = optimize(&f, &c, &LossWeights::default()).unwrap();
        prop_assert_eq!(set.poses.len(), k);
        for (p, &v) in set.poses.iter().zip(&set.pose_valid) {
            prop_assert_eq!(v, is_valid(&f, p, c.tau));
            prop_assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= 47.0 && p.y <= 47.0);
            prop_assert!((0.0..std::f64::consts::PI).contains(&p.theta));
        }
        let expect = set.pose_valid.iter().all(|&v| v) && max_pair_overlap(&set.poses) < MAX_PAIR_OVERLAP;
        prop_assert_eq!(set.valid, expect);
    }
}
