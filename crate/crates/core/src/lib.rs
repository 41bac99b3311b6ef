//! contactmap: autonomous contact-measurement planning for probe stations.
//!
//! The crate covers the whole offline chain from segmented film images to a
//! machine program and back to spatial property maps:
//!
//! 1. [`field`] ingests binary film masks and smooths them into differentiable fields.
//! 2. [`loss`] scores a set of probe poses on a field (coverage, angular spread,
//!    overlap) with analytic gradients; [`optimizer`] places poses by multi-start descent.
//! 3. [`calibration`] maps pixels to robot millimeters and computes pivot targets.
//! 4. [`route`] orders all contacts as an open-loop tour (noisy greedy construction
//!    and four baselines).
//! 5. [`gcode`] emits a Marlin-compatible program; [`measurement`] turns IV sweeps
//!    into photoconductance and interpolated maps.
//! 6. [`pipeline`] wires the stages together behind a versioned TOML config.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod field;
pub mod gcode;
pub mod loss;
pub mod measurement;
pub mod optimizer;
pub mod pipeline;
pub mod route;
pub mod seed;

pub use calibration::{EffectorGeometry, FrameCalibration};
pub use field::{Pose, ProbeFootprint, ScalarField, SegmentMask};
pub use loss::{LossReport, LossWeights};
pub use optimizer::{OptimizerConfig, PoseSet};
pub use route::{PlannerConfig, Tour, TourGraph};
