//! Multi-start gradient descent over pose sets, plus the random-sampling
//! baseline that picks the lowest-loss set out of `N` uniform draws.

use crate::field::{PixelFrame, Pose, ProbeFootprint, ScalarField};
use crate::loss::{self, LossError, LossReport, LossWeights};
use crate::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sets whose largest pairwise overlap reaches this are not disjoint.
pub const MAX_PAIR_OVERLAP: f64 = 1e-3;

/// Fields below this value are outside the sampling box.
const SUPPORT_THRESHOLD: f64 = 1e-3;

const MAX_HALVINGS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("segment {0}: field has no support")]
    EmptyField(String),
    #[error("segment {segment}: every restart produced a non-finite loss ({source})")]
    AllRestartsFailed { segment: String, source: LossError },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub step_size: f64,
    pub step_decay: f64,
    pub seed: u64,
    pub tau: f64,
    /// Candidate count for the oracle-seeded restart.
    pub oracle_samples: usize,
    /// Candidate count used to initialize every other restart.
    pub restart_samples: usize,
    /// Largest per-iteration move of any pose, px.
    pub max_move_px: f64,
    /// Largest per-iteration rotation of any pose, rad.
    pub max_turn_rad: f64,
    /// Extra descents with a heavier overlap weight when a converged set is not disjoint.
    pub penalty_rounds: usize,
    /// Overlap weight multiplier per extra round.
    pub penalty_growth: f64,
    pub footprint: ProbeFootprint,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            k: 3,
            restarts: 8,
            max_iters: 200,
            step_size: 32.0,
            step_decay: 1.0,
            seed: 0,
            tau: 0.5,
            oracle_samples: 100,
            restart_samples: 5,
            max_move_px: 2.0,
            max_turn_rad: 0.2,
            penalty_rounds: 4,
            penalty_growth: 10.0,
            footprint: ProbeFootprint::single(2.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let fail = |m: &str| Err(OptimizeError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        if !(self.step_size > 0.0) {
            return fail("step_size must be positive");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return fail("step_decay must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail("tau must lie in (0, 1)");
        }
        if self.oracle_samples == 0 || self.restart_samples == 0 {
            return fail("sample counts must be at least 1");
        }
        if !(self.max_move_px > 0.0 && self.max_turn_rad > 0.0) {
            return fail("move limits must be positive");
        }
        if !(self.penalty_growth >= 1.0) {
            return fail("penalty_growth must be at least 1");
        }
        if !self.footprint.is_valid() {
            return fail("probe footprint is invalid");
        }
        Ok(())
    }
}

/// `k` poses placed on one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSet {
    pub segment_id: String,
    pub poses: Vec<Pose>,
    pub pose_valid: Vec<bool>,
    pub final_loss: LossReport,
    /// Every pose valid and all pairwise overlaps below [`MAX_PAIR_OVERLAP`].
    pub valid: bool,
    pub frame: PixelFrame,
}

impl PoseSet {
    fn assess(field: &ScalarField, poses: Vec<Pose>, report: LossReport, tau: f64) -> PoseSet {
        let pose_valid: Vec<bool> = poses.iter().map(|p| loss::is_valid(field, p, tau)).collect();
        let valid = pose_valid.iter().all(|&v| v) && loss::max_pair_overlap(&poses) < MAX_PAIR_OVERLAP;
        PoseSet {
            segment_id: field.segment_id.clone(),
            poses,
            pose_valid,
            final_loss: report,
            valid,
            frame: field.frame,
        }
    }
}

/// One logged descent iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub segment_id: String,
    pub restart: usize,
    /// 0 for the configured weights, r for an overlap weight scaled by `penalty_growth^r`.
    pub penalty_round: usize,
    pub iter: usize,
    pub step: f64,
    pub report: LossReport,
}

fn sample_box(field: &ScalarField) -> Result<(f64, f64, f64, f64), OptimizeError> {
    let (x0, y0, x1, y1) = field
        .support_box(SUPPORT_THRESHOLD)
        .ok_or_else(|| OptimizeError::EmptyField(field.segment_id.clone()))?;
    Ok((x0 as f64, x1 as f64, y0 as f64, y1 as f64))
}

fn draw_set(
    rng: &mut ChaCha8Rng,
    bbox: (f64, f64, f64, f64),
    k: usize,
    footprint: ProbeFootprint,
) -> Vec<Pose> {
    let (x0, x1, y0, y1) = bbox;
    (0..k)
        .map(|_| {
            let x = if x1 > x0 { rng.random_range(x0..x1) } else { x0 };
            let y = if y1 > y0 { rng.random_range(y0..y1) } else { y0 };
            let theta = rng.random_range(0.0..PI);
            Pose::new(x, y, theta, footprint)
        })
        .collect()
}

/// Best of `samples` uniformly drawn pose sets (lowest loss, first wins ties).
pub fn stochastic_oracle(
    field: &ScalarField,
    samples: usize,
    cfg: &OptimizerConfig,
    w: &LossWeights,
) -> Result<PoseSet, OptimizeError> {
    let (poses, report) = oracle_draw(field, samples.max(1), cfg.k, cfg.footprint, cfg.seed, w)?;
    Ok(PoseSet::assess(field, poses, report, cfg.tau))
}

fn oracle_draw(
    field: &ScalarField,
    samples: usize,
    k: usize,
    footprint: ProbeFootprint,
    seed: u64,
    w: &LossWeights,
) -> Result<(Vec<Pose>, LossReport), OptimizeError> {
    let bbox = sample_box(field)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<Pose>, f64)> = None;
    let mut last_err = None;
    for _ in 0..samples {
        let set = draw_set(&mut rng, bbox, k, footprint);
        match loss::loss_value(field, &set, w) {
            Ok(v) => {
                if best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((set, v));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (poses, _) = best.ok_or_else(|| OptimizeError::AllRestartsFailed {
        segment: field.segment_id.clone(),
        source: last_err.unwrap_or(LossError::NoPoses),
    })?;
    let report = loss::evaluate(field, &poses, w).map_err(|e| OptimizeError::AllRestartsFailed {
        segment: field.segment_id.clone(),
        source: e,
    })?;
    Ok((poses, report))
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Position,
    Angle,
}

fn step_poses(poses: &[Pose], grad: &[[f64; 3]], step: f64, block: Block, width: usize, height: usize) -> Vec<Pose> {
    poses
        .iter()
        .zip(grad)
        .map(|(p, g)| {
            let mut q = *p;
            match block {
                Block::Position => {
                    q.x -= step * g[0];
                    q.y -= step * g[1];
                }
                Block::Angle => {
                    // a step across the wrap would jump the angle variance; hold instead
                    let t = p.theta - step * g[2];
                    if (0.0..PI).contains(&t) {
                        q.theta = t;
                    }
                }
            }
            q.clamped(width, height)
        })
        .collect()
}

/// One backtracking step on a single parameter block. Returns the accepted
/// step length, or `None` when every halving increased the loss.
#[allow(clippy::too_many_arguments)]
fn line_search(
    field: &ScalarField,
    poses: &mut Vec<Pose>,
    report: &mut LossReport,
    block: Block,
    base: f64,
    cap: f64,
    w: &LossWeights,
) -> Result<Option<f64>, LossError> {
    let gmax = report
        .grad
        .iter()
        .map(|g| match block {
            Block::Position => g[0].hypot(g[1]),
            Block::Angle => g[2].abs(),
        })
        .fold(0.0, f64::max);
    if gmax == 0.0 {
        return Ok(None);
    }
    // shrink the trial step so no pose moves further than the cap
    let mut step = base.min(cap / gmax);
    for _ in 0..=MAX_HALVINGS {
        let cand = step_poses(poses, &report.grad, step, block, field.width(), field.height());
        let r = loss::evaluate(field, &cand, w)?;
        if r.total <= report.total {
            *poses = cand;
            *report = r;
            return Ok(Some(step));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Descent under the configured weights, then under heavier overlap weights
/// while the set is still not disjoint. The report uses the configured weights.
fn descend(
    field: &ScalarField,
    init: Vec<Pose>,
    cfg: &OptimizerConfig,
    w: &LossWeights,
    restart: usize,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<(Vec<Pose>, LossReport), LossError> {
    let (mut poses, mut report) = descend_phase(field, init, cfg, w, restart, 0, trace.as_deref_mut())?;
    let mut active = *w;
    for round in 1..=cfg.penalty_rounds {
        if active.w_overlap <= 0.0 || loss::max_pair_overlap(&poses) < MAX_PAIR_OVERLAP {
            break;
        }
        active.w_overlap *= cfg.penalty_growth;
        (poses, _) = descend_phase(field, poses, cfg, &active, restart, round, trace.as_deref_mut())?;
        report = loss::evaluate(field, &poses, w)?;
    }
    Ok((poses, report))
}

/// Backtracking descent from `init`. Accepted iterates never increase the loss.
fn descend_phase(
    field: &ScalarField,
    init: Vec<Pose>,
    cfg: &OptimizerConfig,
    w: &LossWeights,
    restart: usize,
    penalty_round: usize,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<(Vec<Pose>, LossReport), LossError> {
    let (width, height) = (field.width(), field.height());
    let mut poses: Vec<Pose> = init.into_iter().map(|p| p.clamped(width, height)).collect();
    let mut report = loss::evaluate(field, &poses, w)?;
    let mut base = cfg.step_size;
    for iter in 0..cfg.max_iters {
        let before = report.total;
        // positions and angles are searched separately so a held angle never
        // blocks a position step
        let moved = line_search(field, &mut poses, &mut report, Block::Position, base, cfg.max_move_px, w)?;
        let turned = line_search(field, &mut poses, &mut report, Block::Angle, base, cfg.max_turn_rad, w)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceEntry {
                segment_id: field.segment_id.clone(),
                restart,
                penalty_round,
                iter,
                step: moved.or(turned).unwrap_or(0.0),
                report: report.clone(),
            });
        }
        let gain = before - report.total;
        if (moved.is_none() && turned.is_none()) || gain <= 1e-9 * report.total.abs().max(1.0) {
            break;
        }
        base *= cfg.step_decay;
    }
    Ok((poses, report))
}

/// Multi-start descent; returns the lowest-loss restart.
///
/// Restart 0 starts from `stochastic_oracle(oracle_samples)` with the same seed,
/// so the result never loses to that baseline unless its restart hits a
/// non-finite loss.
pub fn optimize(
    field: &ScalarField,
    cfg: &OptimizerConfig,
    w: &LossWeights,
) -> Result<PoseSet, OptimizeError> {
    optimize_inner(field, cfg, w, None)
}

/// Same as [`optimize`], also returning every accepted iteration.
pub fn optimize_traced(
    field: &ScalarField,
    cfg: &OptimizerConfig,
    w: &LossWeights,
) -> Result<(PoseSet, Vec<TraceEntry>), OptimizeError> {
    let mut trace = Vec::new();
    let set = optimize_inner(field, cfg, w, Some(&mut trace))?;
    Ok((set, trace))
}

fn optimize_inner(
    field: &ScalarField,
    cfg: &OptimizerConfig,
    w: &LossWeights,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<PoseSet, OptimizeError> {
    cfg.validate()?;
    sample_box(field)?;
    let mut best: Option<(Vec<Pose>, LossReport)> = None;
    let mut last_err = None;
    for restart in 0..cfg.restarts {
        let init = if restart == 0 {
            oracle_draw(field, cfg.oracle_samples, cfg.k, cfg.footprint, cfg.seed, w)
        } else {
            oracle_draw(
                field,
                cfg.restart_samples,
                cfg.k,
                cfg.footprint,
                derive_seed(cfg.seed, restart as u64),
                w,
            )
        };
        let init = match init {
            Ok((poses, _)) => poses,
            Err(OptimizeError::AllRestartsFailed { source, .. }) => {
                log::warn!("segment {}: restart {restart} init failed: {source}", field.segment_id);
                last_err = Some(source);
                continue;
            }
            Err(e) => return Err(e),
        };
        match descend(field, init, cfg, w, restart, trace.as_deref_mut()) {
            Ok((poses, report)) => {
                if best.as_ref().is_none_or(|(_, b)| report.total < b.total) {
                    best = Some((poses, report));
                }
            }
            Err(e) => {
                log::warn!("segment {}: restart {restart} discarded: {e}", field.segment_id);
                last_err = Some(e);
            }
        }
    }
    let (poses, report) = best.ok_or_else(|| OptimizeError::AllRestartsFailed {
        segment: field.segment_id.clone(),
        source: last_err.unwrap_or(LossError::NoPoses),
    })?;
    Ok(PoseSet::assess(field, poses, report, cfg.tau))
}

/// Optimizes every field independently; segment `i` uses seed `cfg.seed ^ i`.
///
/// Output order follows input order regardless of scheduling; failures stay in
/// place as `Err` entries.
pub fn batch_optimize(
    fields: &[ScalarField],
    cfg: &OptimizerConfig,
    w: &LossWeights,
) -> Vec<Result<PoseSet, OptimizeError>> {
    fields
        .par_iter()
        .enumerate()
        .map(|(i, field)| {
            let seg_cfg = OptimizerConfig {
                seed: cfg.seed ^ i as u64,
                ..*cfg
            };
            optimize(field, &seg_cfg, w)
        })
        .collect()
}
