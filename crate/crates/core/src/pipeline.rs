//! Masks → fields → poses → tour → G-code → analysis, driven by one TOML file.
//!
//! ```toml
//! config_version = 1
//! seed = 7
//! out_dir = "out"
//!
//! [masks]
//! glob = "masks/*.pgm"
//! scale_mm_per_px = 0.25
//!
//! [planner]
//! algorithm = "noisy_dijkstra"
//! alpha = 0.02
//! ```
//!
//! Every other section (`field`, `loss`, `optimizer`, `calibration`, `probe`,
//! `gcode`, `measurement`) is optional. Relative paths resolve against the
//! config file's directory. The top-level `seed` overrides the seeds of the
//! optimizer, the planners and the synthetic measurements.

use crate::calibration::{EffectorGeometry, FrameCalibration};
use crate::field::synth::{film_array, ArrayLayout};
use crate::field::{load_mask, smooth, write_pgm, ScalarField, SegmentMask};
use crate::gcode::{emit_gcode, GcodeConfig, GcodeProgram};
use crate::loss::LossWeights;
use crate::measurement::{
    campaign_summary, load_campaign, photoconductance_with, spatial_map, synth_iv, write_iv_csv, write_map,
    write_measurements_csv, write_summary_csv, InterceptMode, IvRecord, MeasurementRecord, SpatialMap, SummaryRow,
    SynthIvConfig,
};
use crate::optimizer::{optimize_traced, OptimizerConfig, PoseSet, TraceEntry};
use crate::route::{build_graph, plan_tour, GaConfig, GraphNode, Planner, PlannerConfig, Tour, TourGraph};
use crate::seed::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

/// File written to the output directory when a run stops early.
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Masks,
    Fields,
    Poses,
    Route,
    Gcode,
    Analysis,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Masks => "masks",
            Stage::Fields => "fields",
            Stage::Poses => "poses",
            Stage::Route => "route",
            Stage::Gcode => "gcode",
            Stage::Analysis => "analysis",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub glob: String,
    pub scale_mm_per_px: f64,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection {
            glob: "masks/*.pgm".into(),
            scale_mm_per_px: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub sigma: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection { sigma: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub algorithm: Planner,
    pub alpha: f64,
    pub generations: usize,
    /// Where the probe starts; becomes the tour's first node.
    pub home_mm: [f64; 2],
    pub ga: GaConfig,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let p = PlannerConfig::default();
        PlannerSection {
            algorithm: Planner::NoisyDijkstra,
            alpha: p.alpha,
            generations: p.generations,
            home_mm: [0.0, 0.0],
            ga: GaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// JSON calibration file; identity when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    /// Campaign directory laid out as `<segment_id>/<pose_index>.csv`.
    pub iv_dir: Option<PathBuf>,
    /// Simulate a campaign over the planned contacts instead of reading one.
    pub synthetic: bool,
    pub synth: SynthIvConfig,
    pub intercept: InterceptMode,
    /// Interpolation bandwidth in pixels; mean inter-pose distance when absent.
    pub bandwidth_px: Option<f64>,
    pub maps: bool,
    /// Film composition per segment id. Synthetic runs fill missing entries
    /// with an even ramp over the segments in load order.
    pub compositions: BTreeMap<String, f64>,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        MeasurementSection {
            iv_dir: None,
            synthetic: false,
            synth: SynthIvConfig::default(),
            intercept: InterceptMode::Free,
            bandwidth_px: None,
            maps: true,
            compositions: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub config_version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub masks: MaskSection,
    pub field: FieldSection,
    pub loss: LossWeights,
    pub optimizer: OptimizerConfig,
    pub planner: PlannerSection,
    pub calibration: CalibrationSection,
    pub probe: EffectorGeometry,
    pub gcode: GcodeConfig,
    pub measurement: MeasurementSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            config_version: CONFIG_VERSION,
            seed: 0,
            out_dir: "out".into(),
            masks: MaskSection::default(),
            field: FieldSection::default(),
            loss: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            planner: PlannerSection::default(),
            calibration: CalibrationSection::default(),
            probe: EffectorGeometry::default(),
            gcode: GcodeConfig::default(),
            measurement: MeasurementSection::default(),
        }
    }
}

/// One problem found while validating a config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Dotted key, e.g. `planner.alpha`.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.key, self.message)
    }
}

fn diag(key: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        key: key.into(),
        message: message.into(),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(at(Stage::Config))?;
        if cfg.config_version != CONFIG_VERSION {
            return Err(PipelineError::new(
                Stage::Config,
                format!(
                    "config_version {} is not supported (expected {CONFIG_VERSION})",
                    cfg.config_version
                ),
            ));
        }
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.out_dir = resolve(base, &self.out_dir);
        let g = Path::new(&self.masks.glob);
        if !g.is_absolute() {
            self.masks.glob = base.join(g).to_string_lossy().into_owned();
        }
        if let Some(p) = &self.calibration.path {
            self.calibration.path = Some(resolve(base, p));
        }
        if let Some(p) = &self.measurement.iv_dir {
            self.measurement.iv_dir = Some(resolve(base, p));
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.optimizer
        }
    }

    fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            alpha: self.planner.alpha,
            generations: self.planner.generations,
            seed: self.seed,
        }
    }

    pub fn mask_paths(&self) -> Result<Vec<PathBuf>, String> {
        let entries = glob::glob(&self.masks.glob).map_err(|e| e.to_string())?;
        let mut paths: Vec<PathBuf> = entries.filter_map(Result::ok).filter(|p| p.is_file()).collect();
        paths.sort();
        Ok(paths)
    }

    /// Schema-level range and reference checks; never touches the output directory.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        match self.mask_paths() {
            Err(e) => d.push(diag("masks.glob", format!("is not a valid pattern: {e}"))),
            Ok(p) if p.is_empty() => d.push(diag("masks.glob", format!("matches no files: {}", self.masks.glob))),
            Ok(_) => {}
        }
        if !(self.masks.scale_mm_per_px > 0.0 && self.masks.scale_mm_per_px.is_finite()) {
            d.push(diag("masks.scale_mm_per_px", "must be positive"));
        }
        if !(self.field.sigma > 0.0 && self.field.sigma.is_finite()) {
            d.push(diag("field.sigma", "must be positive"));
        }
        if !self.loss.is_valid() {
            d.push(diag("loss", "weights must be non-negative and the steepness positive"));
        }
        if let Err(e) = self.optimizer.validate() {
            d.push(diag("optimizer", e.to_string()));
        }
        let a = self.planner.alpha;
        if !(a.is_finite() && (0.0..1.0).contains(&a)) {
            d.push(diag("planner.alpha", format!("out of range: {a} (expected 0 <= alpha < 1)")));
        }
        if self.planner.generations == 0 {
            d.push(diag("planner.generations", "must be at least 1"));
        }
        if let Err(e) = self.planner.ga.validate() {
            d.push(diag("planner.ga", e.to_string()));
        }
        if let Some(p) = &self.calibration.path {
            if !p.is_file() {
                d.push(diag("calibration.path", format!("file not found: {}", p.display())));
            }
        }
        if !(self.probe.arm_length_mm > 0.0) {
            d.push(diag("probe.arm_length_mm", "must be positive"));
        }
        if let Err(e) = self.gcode.validate() {
            d.push(diag("gcode", e.to_string()));
        }
        let m = &self.measurement;
        if let Some(p) = &m.iv_dir {
            if !p.is_dir() {
                d.push(diag("measurement.iv_dir", format!("directory not found: {}", p.display())));
            }
            if m.synthetic {
                d.push(diag("measurement.synthetic", "cannot be combined with measurement.iv_dir"));
            }
        }
        if let Some(bw) = m.bandwidth_px {
            if !(bw > 0.0 && bw.is_finite()) {
                d.push(diag("measurement.bandwidth_px", "must be positive"));
            }
        }
        if m.compositions.values().any(|x| !(0.0..=1.0).contains(x)) {
            d.push(diag("measurement.compositions", "values must lie in [0, 1]"));
        }
        d
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig, PipelineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    PipelineConfig::from_toml_str(&text, base)
}

/// Parses and checks a config file, reporting every problem found.
pub fn validate_config(path: impl AsRef<Path>) -> Vec<Diagnostic> {
    match load_config(path) {
        Ok(cfg) => cfg.diagnostics(),
        Err(e) => vec![diag("config", e.message)],
    }
}

pub fn load_calibration(cfg: &PipelineConfig) -> Result<FrameCalibration, PipelineError> {
    match &cfg.calibration.path {
        Some(p) => FrameCalibration::load(p)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", p.display()))),
        None => Ok(FrameCalibration::default()),
    }
}

pub fn load_masks(cfg: &PipelineConfig) -> Result<Vec<SegmentMask>, PipelineError> {
    let paths = cfg.mask_paths().map_err(at(Stage::Masks))?;
    if paths.is_empty() {
        return Err(PipelineError::new(
            Stage::Masks,
            format!("no masks match {}", cfg.masks.glob),
        ));
    }
    let masks = paths
        .iter()
        .map(|p| load_mask(p, cfg.masks.scale_mm_per_px))
        .collect::<Result<Vec<_>, _>>()
        .map_err(at(Stage::Masks))?;
    let mut seen = HashMap::new();
    for (i, m) in masks.iter().enumerate() {
        if let Some(j) = seen.insert(m.id.as_str(), i) {
            return Err(PipelineError::new(
                Stage::Masks,
                format!("segment id {:?} appears in both {} and {}", m.id, paths[j].display(), paths[i].display()),
            ));
        }
    }
    Ok(masks)
}

pub fn build_fields(cfg: &PipelineConfig, masks: &[SegmentMask]) -> Result<Vec<ScalarField>, PipelineError> {
    masks
        .par_iter()
        .map(|m| smooth(m, cfg.field.sigma))
        .collect::<Result<Vec<_>, _>>()
        .map_err(at(Stage::Fields))
}

#[derive(Debug, Clone, Default)]
pub struct PoseStage {
    pub sets: Vec<PoseSet>,
    /// `(segment id, reason)` for segments that could not be optimized.
    pub failed: Vec<(String, String)>,
    pub trace: Vec<TraceEntry>,
}

/// Optimizes every field; segment `i` uses seed `seed ^ i`.
pub fn place_poses(cfg: &PipelineConfig, fields: &[ScalarField]) -> Result<PoseStage, PipelineError> {
    let base = cfg.optimizer_config();
    base.validate().map_err(at(Stage::Poses))?;
    let results: Vec<_> = fields
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let c = OptimizerConfig {
                seed: base.seed ^ i as u64,
                ..base
            };
            optimize_traced(f, &c, &cfg.loss)
        })
        .collect();
    let mut out = PoseStage::default();
    for (f, r) in fields.iter().zip(results) {
        match r {
            Ok((set, trace)) => {
                out.sets.push(set);
                out.trace.extend(trace);
            }
            Err(e) => {
                log::warn!("segment {}: {e}", f.segment_id);
                out.failed.push((f.segment_id.clone(), e.to_string()));
            }
        }
    }
    if out.sets.is_empty() {
        return Err(PipelineError::new(Stage::Poses, "no segment produced a pose set"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub graph: TourGraph,
    pub tour: Tour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlanFile {
    start: usize,
    nodes: Vec<GraphNode>,
    tour: Tour,
}

impl Plan {
    pub fn to_json(&self) -> String {
        let f = PlanFile {
            start: self.graph.start(),
            nodes: self.graph.nodes().to_vec(),
            tour: self.tour.clone(),
        };
        serde_json::to_string_pretty(&f).expect("plan is serializable")
    }

    pub fn from_json(text: &str) -> Result<Plan, PipelineError> {
        let f: PlanFile = serde_json::from_str(text).map_err(at(Stage::Route))?;
        let graph = TourGraph::new(f.nodes, f.start).map_err(at(Stage::Route))?;
        if !graph.is_open_tour(&f.tour.order) {
            return Err(PipelineError::new(Stage::Route, "stored tour does not visit every node once"));
        }
        Ok(Plan { graph, tour: f.tour })
    }
}

pub fn plan_route(
    cfg: &PipelineConfig,
    calib: &FrameCalibration,
    sets: &[PoseSet],
) -> Result<Plan, PipelineError> {
    let graph = build_graph(sets, calib, cfg.planner.home_mm).map_err(at(Stage::Route))?;
    let pc = cfg.planner_config();
    pc.validate().map_err(at(Stage::Route))?;
    let tour = plan_tour(cfg.planner.algorithm, &graph, &pc, &cfg.planner.ga, cfg.seed).map_err(at(Stage::Route))?;
    Ok(Plan { graph, tour })
}

pub fn program(cfg: &PipelineConfig, plan: &Plan) -> Result<GcodeProgram, PipelineError> {
    emit_gcode(&plan.tour, &plan.graph, &cfg.probe, &cfg.gcode).map_err(at(Stage::Gcode))
}

/// Pixel positions and values a map was interpolated from.
pub type MapSamples = Vec<([f64; 2], f64)>;

#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub records: Vec<MeasurementRecord>,
    pub summary: Vec<SummaryRow>,
    pub maps: Vec<(SpatialMap, MapSamples)>,
    /// Simulated sweeps, present only for synthetic campaigns.
    pub simulated: Vec<IvRecord>,
}

/// Synthetic sweeps for every valid pose. Segment `s` has composition from the
/// config or `s / (n - 1)`; contact quality is the field value under the pose.
pub fn simulate_campaign(
    cfg: &PipelineConfig,
    fields: &[ScalarField],
    sets: &[PoseSet],
) -> Vec<IvRecord> {
    let n = sets.len();
    let by_id: HashMap<&str, &ScalarField> = fields.iter().map(|f| (f.segment_id.as_str(), f)).collect();
    let mut out = Vec::new();
    for (s, set) in sets.iter().enumerate() {
        let x = composition(cfg, &set.segment_id, s, n);
        let field = by_id.get(set.segment_id.as_str());
        for (i, (pose, &ok)) in set.poses.iter().zip(&set.pose_valid).enumerate() {
            if !ok {
                continue;
            }
            let q = field.map_or(1.0, |f| f.sample(pose.x, pose.y).clamp(0.0, 1.0));
            let seed = derive_seed(derive_seed(cfg.seed, s as u64), i as u64);
            let mut rec = synth_iv(&cfg.measurement.synth, x, q, seed);
            rec.segment_id = set.segment_id.clone();
            rec.pose_index = i;
            out.push(rec);
        }
    }
    out
}

fn composition(cfg: &PipelineConfig, id: &str, index: usize, n: usize) -> f64 {
    cfg.measurement.compositions.get(id).copied().unwrap_or(if n > 1 {
        index as f64 / (n - 1) as f64
    } else {
        0.0
    })
}

/// Fits every sweep that matches a pose and builds per-segment maps.
///
/// Returns `None` when the config names no campaign.
pub fn analyze(
    cfg: &PipelineConfig,
    masks: &[SegmentMask],
    fields: &[ScalarField],
    sets: &[PoseSet],
) -> Result<Option<Analysis>, PipelineError> {
    let m = &cfg.measurement;
    let (ivs, simulated) = if m.synthetic {
        let v = simulate_campaign(cfg, fields, sets);
        (v.clone(), v)
    } else if let Some(dir) = &m.iv_dir {
        (load_campaign(dir).map_err(at(Stage::Analysis))?, Vec::new())
    } else {
        return Ok(None);
    };
    let index: HashMap<&str, (usize, &PoseSet)> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| (s.segment_id.as_str(), (i, s)))
        .collect();
    let fits: Vec<_> = ivs
        .par_iter()
        .map(|rec| photoconductance_with(rec, m.intercept))
        .collect();
    let mut records = Vec::with_capacity(ivs.len());
    for (rec, fit) in ivs.iter().zip(fits) {
        let fit = fit.map_err(|e| {
            PipelineError::new(Stage::Analysis, format!("{}/{}: {e}", rec.segment_id, rec.pose_index))
        })?;
        let Some(&(s, set)) = index.get(rec.segment_id.as_str()) else {
            log::warn!("sweep for unknown segment {} ignored", rec.segment_id);
            continue;
        };
        let Some(pose) = set.poses.get(rec.pose_index) else {
            log::warn!("sweep for {}/{} has no pose, ignored", rec.segment_id, rec.pose_index);
            continue;
        };
        let cx = if m.synthetic || m.compositions.contains_key(&rec.segment_id) {
            Some(composition(cfg, &rec.segment_id, s, sets.len()))
        } else {
            None
        };
        records.push(MeasurementRecord {
            segment_id: rec.segment_id.clone(),
            pose_index: rec.pose_index,
            x_px: pose.x,
            y_px: pose.y,
            theta_rad: pose.theta,
            g_ph: fit.g_ph,
            fit_r2: fit.r2,
            composition_x: cx,
        });
    }
    let summary = campaign_summary(&records);
    let mut maps = Vec::new();
    if m.maps {
        for mask in masks {
            let samples: Vec<([f64; 2], f64)> = records
                .iter()
                .filter(|r| r.segment_id == mask.id)
                .map(|r| ([r.x_px, r.y_px], r.g_ph))
                .collect();
            if samples.is_empty() {
                continue;
            }
            let map = spatial_map(&samples, mask, m.bandwidth_px).map_err(at(Stage::Analysis))?;
            maps.push((map, samples));
        }
    }
    Ok(Some(Analysis {
        records,
        summary,
        maps,
        simulated,
    }))
}

pub fn poses_csv(sets: &[PoseSet], calib: &FrameCalibration) -> Result<String, PipelineError> {
    let mut s = String::from(
        "segment_id,pose_index,x_px,y_px,theta_rad,x_mm,y_mm,pose_valid,set_valid,loss_total\n",
    );
    for set in sets {
        for (i, (p, ok)) in set.poses.iter().zip(&set.pose_valid).enumerate() {
            let mm = calib
                .rectify(set.frame.to_plane(p.x, p.y))
                .map_err(at(Stage::Output))?;
            let _ = writeln!(
                s,
                "{},{i},{:.6},{:.6},{:.9},{:.6},{:.6},{ok},{},{:.9}",
                set.segment_id, p.x, p.y, p.theta, mm[0], mm[1], set.valid, set.final_loss.total
            );
        }
    }
    Ok(s)
}

pub fn tour_csv(plan: &Plan) -> String {
    let mut s = String::from("step,node,segment_id,pose_index,x_mm,y_mm,theta_deg,cumulative_mm\n");
    let mut acc = 0.0;
    let mut prev = None;
    for (step, &i) in plan.tour.order.iter().enumerate() {
        if let Some(p) = prev {
            acc += plan.graph.dist(p, i);
        }
        prev = Some(i);
        let n = &plan.graph.nodes()[i];
        let (seg, pose) = match &n.pose_ref {
            Some(r) => (r.segment_id.as_str(), r.pose_index.to_string()),
            None => ("home", String::new()),
        };
        let _ = writeln!(
            s,
            "{step},{i},{seg},{pose},{:.6},{:.6},{:.6},{:.6}",
            n.x_mm, n.y_mm, n.theta_deg, acc
        );
    }
    s
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let p = dir.join(name);
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent).map_err(at(Stage::Output))?;
    }
    std::fs::write(&p, contents).map_err(|e| PipelineError::new(Stage::Output, format!("{}: {e}", p.display())))?;
    written.push(p);
    Ok(())
}

pub fn write_poses(
    dir: &Path,
    stage: &PoseStage,
    calib: &FrameCalibration,
    trace: bool,
    written: &mut Vec<PathBuf>,
) -> Result<(), PipelineError> {
    write(dir, "poses.csv", poses_csv(&stage.sets, calib)?, written)?;
    let json = serde_json::to_string_pretty(&stage.sets).map_err(at(Stage::Output))?;
    write(dir, "poses.json", json, written)?;
    if trace {
        let mut s = String::new();
        for t in &stage.trace {
            s.push_str(&serde_json::to_string(t).map_err(at(Stage::Output))?);
            s.push('\n');
        }
        write(dir, "trace.jsonl", s, written)?;
    }
    Ok(())
}

pub fn write_plan(dir: &Path, plan: &Plan, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    write(dir, "tour.csv", tour_csv(plan), written)?;
    write(dir, "plan.json", plan.to_json(), written)
}

pub fn write_program(dir: &Path, prog: &GcodeProgram, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    write(dir, "program.gcode", prog.to_string(), written)
}

pub fn write_analysis(dir: &Path, a: &Analysis, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    write_measurements_csv(&a.records, &mut buf).map_err(at(Stage::Output))?;
    write(dir, "measurements.csv", &buf, written)?;
    buf.clear();
    write_summary_csv(&a.summary, &mut buf).map_err(at(Stage::Output))?;
    write(dir, "summary.csv", &buf, written)?;
    for rec in &a.simulated {
        let p = dir.join("iv").join(&rec.segment_id).join(format!("{}.csv", rec.pose_index));
        std::fs::create_dir_all(p.parent().unwrap()).map_err(at(Stage::Output))?;
        write_iv_csv(rec, &p).map_err(at(Stage::Output))?;
        written.push(p);
    }
    if !a.maps.is_empty() {
        std::fs::create_dir_all(dir.join("maps")).map_err(at(Stage::Output))?;
    }
    for (map, samples) in &a.maps {
        let stem = dir.join("maps").join(&map.segment_id);
        write_map(map, samples, &stem).map_err(at(Stage::Output))?;
        written.push(stem.with_extension("sfld"));
        written.push(stem.with_extension("json"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also write every accepted optimizer iteration to `trace.jsonl`.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub segments: usize,
    pub valid_sets: usize,
    pub failed_segments: Vec<String>,
    pub contacts: usize,
    pub planner: Planner,
    pub tour_length_mm: f64,
    pub measurements: usize,
    pub artifacts: Vec<PathBuf>,
}

/// Runs every stage and writes all artifacts to `cfg.out_dir`.
///
/// On failure a [`FAILURE_MARKER`] file naming the stage is left next to any
/// artifacts already written.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunSummary, PipelineError> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(at(Stage::Output))?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(at(Stage::Output))?;
    }
    let mut written = Vec::new();
    let result = run_stages(cfg, opts, &mut written);
    if let Err(e) = &result {
        let mut note = format!("stage: {}\nerror: {}\nwritten:\n", e.stage, e.message);
        for p in &written {
            let _ = writeln!(note, "  {}", p.display());
        }
        let _ = std::fs::write(&marker, note);
    }
    result
}

fn run_stages(cfg: &PipelineConfig, opts: RunOptions, written: &mut Vec<PathBuf>) -> Result<RunSummary, PipelineError> {
    let problems = cfg.diagnostics();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|d| d.to_string()).collect();
        return Err(PipelineError::new(Stage::Config, list.join("; ")));
    }
    let dir = &cfg.out_dir;
    let calib = load_calibration(cfg)?;
    let masks = load_masks(cfg)?;
    let fields = build_fields(cfg, &masks)?;
    let poses = place_poses(cfg, &fields)?;
    write_poses(dir, &poses, &calib, opts.trace, written)?;
    let plan = plan_route(cfg, &calib, &poses.sets)?;
    write_plan(dir, &plan, written)?;
    let prog = program(cfg, &plan)?;
    write_program(dir, &prog, written)?;
    let analysis = analyze(cfg, &masks, &fields, &poses.sets)?;
    if let Some(a) = &analysis {
        write_analysis(dir, a, written)?;
    }
    let mut summary = RunSummary {
        seed: cfg.seed,
        segments: masks.len(),
        valid_sets: poses.sets.iter().filter(|s| s.valid).count(),
        failed_segments: poses.failed.iter().map(|(id, _)| id.clone()).collect(),
        contacts: prog.contact_cycles,
        planner: plan.tour.algorithm,
        tour_length_mm: plan.tour.length_mm,
        measurements: analysis.as_ref().map_or(0, |a| a.records.len()),
        artifacts: Vec::new(),
    };
    // artifact paths relative to the output directory keep the manifest portable
    summary.artifacts = written
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).to_path_buf())
        .collect();
    summary.artifacts.push("manifest.json".into());
    let manifest = serde_json::to_string_pretty(&summary).map_err(at(Stage::Output))?;
    write(dir, "manifest.json", manifest, written)?;
    Ok(summary)
}

/// Writes a synthetic film array as PGM masks, an identity `calibration.json`
/// and a ready-to-run `config.toml` into `dir`, returning the config path.
pub fn write_synthetic_project(
    dir: &Path,
    layout: &ArrayLayout,
    seed: u64,
    simulate_measurements: bool,
) -> Result<PathBuf, PipelineError> {
    let mask_dir = dir.join("masks");
    std::fs::create_dir_all(&mask_dir).map_err(at(Stage::Output))?;
    for m in film_array(layout, seed) {
        write_pgm(&m, mask_dir.join(format!("{}.pgm", m.id))).map_err(at(Stage::Output))?;
    }
    FrameCalibration::default()
        .save(dir.join("calibration.json"))
        .map_err(at(Stage::Output))?;
    let cfg = PipelineConfig {
        seed,
        calibration: CalibrationSection {
            path: Some("calibration.json".into()),
        },
        masks: MaskSection {
            glob: "masks/*.pgm".into(),
            scale_mm_per_px: layout.scale_mm_per_px,
        },
        measurement: MeasurementSection {
            synthetic: simulate_measurements,
            ..MeasurementSection::default()
        },
        ..PipelineConfig::default()
    };
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string()).map_err(at(Stage::Output))?;
    Ok(path)
}
