//! Photoconductance from paired light/dark IV sweeps, a synthetic film model,
//! and Gaussian-interpolated property maps.

use crate::field::{write_sfld, FieldError, SegmentMask, SfldRaster};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum MeasureError {
    #[error("IV record needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("IV arrays differ in length ({voltages} voltages, {light} light, {dark} dark)")]
    LengthMismatch { voltages: usize, light: usize, dark: usize },
    #[error("voltages must be strictly monotonic")]
    NotMonotonic,
    #[error("voltage span is zero")]
    ZeroSpan,
    #[error("non-finite value in IV record")]
    NonFinite,
    #[error("spatial map needs at least one sample")]
    NoSamples,
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One light/dark sweep pair at a contact pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvRecord {
    pub segment_id: String,
    pub pose_index: usize,
    pub voltages: Vec<f64>,
    pub current_light: Vec<f64>,
    pub current_dark: Vec<f64>,
}

impl IvRecord {
    pub fn new(
        segment_id: impl Into<String>,
        pose_index: usize,
        voltages: Vec<f64>,
        current_light: Vec<f64>,
        current_dark: Vec<f64>,
    ) -> Result<Self, MeasureError> {
        let rec = IvRecord {
            segment_id: segment_id.into(),
            pose_index,
            voltages,
            current_light,
            current_dark,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        let n = self.voltages.len();
        if self.current_light.len() != n || self.current_dark.len() != n {
            return Err(MeasureError::LengthMismatch {
                voltages: n,
                light: self.current_light.len(),
                dark: self.current_dark.len(),
            });
        }
        if n < 2 {
            return Err(MeasureError::TooFewPoints(n));
        }
        let all = self.voltages.iter().chain(&self.current_light).chain(&self.current_dark);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite);
        }
        let up = self.voltages.windows(2).all(|w| w[1] > w[0]);
        let down = self.voltages.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(MeasureError::NotMonotonic);
        }
        Ok(())
    }

    /// `I_light − I_dark` per voltage step.
    pub fn photocurrent(&self) -> Vec<f64> {
        self.current_light
            .iter()
            .zip(&self.current_dark)
            .map(|(l, d)| l - d)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    /// Fit `I_ph = G V + b` and discard `b`.
    #[default]
    Free,
    /// Fit `I_ph = G V`.
    ThroughOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotoFit {
    /// Siemens.
    pub g_ph: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r2: f64,
}

/// Least-squares slope of the photocurrent against voltage, free intercept.
pub fn photoconductance(rec: &IvRecord) -> Result<PhotoFit, MeasureError> {
    photoconductance_with(rec, InterceptMode::Free)
}

pub fn photoconductance_with(rec: &IvRecord, mode: InterceptMode) -> Result<PhotoFit, MeasureError> {
    rec.validate()?;
    let v = &rec.voltages;
    let i = rec.photocurrent();
    let n = v.len() as f64;
    let mv = v.iter().sum::<f64>() / n;
    let mi = i.iter().sum::<f64>() / n;
    let sxx: f64 = v.iter().map(|x| (x - mv).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MeasureError::ZeroSpan);
    }
    let (g_ph, intercept) = match mode {
        InterceptMode::Free => {
            let sxy: f64 = v.iter().zip(&i).map(|(x, y)| (x - mv) * (y - mi)).sum();
            let g = sxy / sxx;
            (g, mi - g * mv)
        }
        InterceptMode::ThroughOrigin => {
            let sxy: f64 = v.iter().zip(&i).map(|(x, y)| x * y).sum();
            let sxx0: f64 = v.iter().map(|x| x * x).sum();
            (sxy / sxx0, 0.0)
        }
    };
    let ss_res: f64 = v
        .iter()
        .zip(&i)
        .map(|(x, y)| (y - g_ph * x - intercept).powi(2))
        .sum();
    let ss_tot: f64 = i.iter().map(|y| (y - mi).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(PhotoFit { g_ph, intercept, r2 })
}

/// Synthetic film response.
///
/// True photoconductance is `G(x, q) = q · (g_base + g_gain · x)`, strictly
/// increasing in the composition `x` for `q > 0`. The dark sweep is ohmic with
/// `dark_conductance` plus `offset_a`. Gaussian noise with standard deviation
/// `noise_rel · max|G V|` is added to the light sweep only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthIvConfig {
    pub points: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub g_base: f64,
    pub g_gain: f64,
    pub dark_conductance: f64,
    pub offset_a: f64,
    pub noise_rel: f64,
}

impl Default for SynthIvConfig {
    fn default() -> Self {
        SynthIvConfig {
            points: 40,
            v_min: -40.0,
            v_max: 40.0,
            g_base: 1.0e-9,
            g_gain: 9.0e-9,
            dark_conductance: 2.0e-10,
            offset_a: 5.0e-12,
            noise_rel: 0.01,
        }
    }
}

impl SynthIvConfig {
    pub fn true_conductance(&self, composition_x: f64, pose_quality: f64) -> f64 {
        pose_quality * (self.g_base + self.g_gain * composition_x)
    }

    pub fn voltages(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|k| self.v_min + (self.v_max - self.v_min) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Sweep pair whose photocurrent has slope exactly `g_true`, plus noise.
pub fn synth_iv_with_conductance(cfg: &SynthIvConfig, g_true: f64, seed: u64) -> IvRecord {
    let v = cfg.voltages();
    let dark: Vec<f64> = v.iter().map(|x| cfg.dark_conductance * x + cfg.offset_a).collect();
    let peak = v.iter().map(|x| (g_true * x).abs()).fold(0.0, f64::max);
    let sd = cfg.noise_rel * peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let light: Vec<f64> = if sd > 0.0 {
        let noise = Normal::new(0.0, sd).expect("finite positive deviation");
        v.iter()
            .zip(&dark)
            .map(|(x, d)| d + g_true * x + noise.sample(&mut rng))
            .collect()
    } else {
        v.iter().zip(&dark).map(|(x, d)| d + g_true * x).collect()
    };
    IvRecord {
        segment_id: String::new(),
        pose_index: 0,
        voltages: v,
        current_light: light,
        current_dark: dark,
    }
}

/// Sweep pair for a film of composition `x ∈ [0, 1]` at a contact of quality `q ∈ [0, 1]`.
pub fn synth_iv(cfg: &SynthIvConfig, composition_x: f64, pose_quality: f64, seed: u64) -> IvRecord {
    let x = composition_x.clamp(0.0, 1.0);
    let q = pose_quality.clamp(0.0, 1.0);
    synth_iv_with_conductance(cfg, cfg.true_conductance(x, q), seed)
}

/// Derived result at one contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub segment_id: String,
    pub pose_index: usize,
    pub x_px: f64,
    pub y_px: f64,
    pub theta_rad: f64,
    pub g_ph: f64,
    pub fit_r2: f64,
    pub composition_x: Option<f64>,
}

/// Per-composition statistics; records without a composition are grouped by segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub composition_x: Option<f64>,
    pub count: usize,
    pub median_g_ph: f64,
    pub min_g_ph: f64,
    pub max_g_ph: f64,
    pub std_g_ph: f64,
}

pub fn campaign_summary(records: &[MeasurementRecord]) -> Vec<SummaryRow> {
    // f64 bit patterns of non-negative compositions sort numerically
    let mut by_x: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut by_seg: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        match r.composition_x {
            Some(x) => by_x.entry(x.max(0.0).to_bits()).or_default().push(r.g_ph),
            None => by_seg.entry(&r.segment_id).or_default().push(r.g_ph),
        }
    }
    let stats = |group: String, composition_x: Option<f64>, mut g: Vec<f64>| {
        let n = g.len();
        let mean = g.iter().sum::<f64>() / n as f64;
        let std = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        SummaryRow {
            group,
            composition_x,
            count: n,
            median_g_ph: crate::route::median(&mut g),
            min_g_ph: min,
            max_g_ph: max,
            std_g_ph: std,
        }
    };
    let mut rows: Vec<SummaryRow> = by_x
        .into_iter()
        .map(|(bits, g)| {
            let x = f64::from_bits(bits);
            stats(format!("x={x}"), Some(x), g)
        })
        .collect();
    rows.extend(by_seg.into_iter().map(|(seg, g)| stats(seg.to_string(), None, g)));
    rows
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "group,composition_x,count,median_g_ph,min_g_ph,max_g_ph,std_g_ph")?;
    for r in rows {
        let x = r.composition_x.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e}",
            r.group, x, r.count, r.median_g_ph, r.min_g_ph, r.max_g_ph, r.std_g_ph
        )?;
    }
    Ok(())
}

pub fn write_measurements_csv<W: Write>(records: &[MeasurementRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "segment_id,pose_index,x_px,y_px,theta_rad,g_ph,fit_r2,composition_x")?;
    for r in records {
        let x = r.composition_x.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.9},{:e},{:.9},{}",
            r.segment_id, r.pose_index, r.x_px, r.y_px, r.theta_rad, r.g_ph, r.fit_r2, x
        )?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct IvRow {
    voltage: f64,
    current_light: f64,
    current_dark: f64,
}

/// Reads a `voltage,current_light,current_dark` CSV.
pub fn read_iv_csv(path: impl AsRef<Path>, segment_id: &str, pose_index: usize) -> Result<IvRecord, MeasureError> {
    let path = path.as_ref();
    let csv_err = |reason: String| MeasureError::Csv {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let (mut v, mut l, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.deserialize::<IvRow>() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        v.push(row.voltage);
        l.push(row.current_light);
        d.push(row.current_dark);
    }
    IvRecord::new(segment_id, pose_index, v, l, d).map_err(|e| csv_err(e.to_string()))
}

pub fn write_iv_csv(rec: &IvRecord, path: impl AsRef<Path>) -> Result<(), MeasureError> {
    let mut out = String::from("voltage,current_light,current_dark\n");
    for k in 0..rec.voltages.len() {
        out.push_str(&format!(
            "{:e},{:e},{:e}\n",
            rec.voltages[k], rec.current_light[k], rec.current_dark[k]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a campaign laid out as `root/<segment_id>/<pose_index>.csv`, sorted by
/// segment then pose index. Files whose stem is not an integer are skipped.
pub fn load_campaign(root: impl AsRef<Path>) -> Result<Vec<IvRecord>, MeasureError> {
    let mut segments: Vec<PathBuf> = std::fs::read_dir(root.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    segments.sort();
    let mut out = Vec::new();
    for dir in segments {
        let segment_id = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut files: Vec<(usize, PathBuf)> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .filter_map(|p| {
                let idx = p.file_stem()?.to_str()?.parse().ok()?;
                Some((idx, p))
            })
            .collect();
        files.sort();
        for (idx, path) in files {
            out.push(read_iv_csv(&path, &segment_id, idx)?);
        }
    }
    Ok(out)
}

/// Interpolated property raster over a segment's bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMap {
    pub segment_id: String,
    /// Pixel coordinates of the raster's first cell in the segment image.
    pub origin_px: [usize; 2],
    pub width: usize,
    pub height: usize,
    /// Row-major; `None` outside the mask.
    pub values: Vec<Option<f64>>,
    pub bandwidth_px: f64,
}

impl SpatialMap {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values[y * self.width + x]
    }
}

/// Nadaraya-Watson estimate at `p` with Gaussian weights, evaluated in log space.
pub fn kernel_estimate(samples: &[([f64; 2], f64)], p: [f64; 2], bandwidth: f64) -> f64 {
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let logw: Vec<f64> = samples
        .iter()
        .map(|(s, _)| -((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2)) * inv)
        .collect();
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (lw, (_, g)) in logw.iter().zip(samples) {
        let w = (lw - m).exp();
        num += w * g;
        den += w;
    }
    num / den
}

/// Mean pairwise distance between sample locations, or 1 px when undefined.
pub fn default_bandwidth(points: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            acc += (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            n += 1;
        }
    }
    if n == 0 || acc <= 0.0 {
        1.0
    } else {
        acc / n as f64
    }
}

/// Gaussian-weighted interpolation of `(pixel position, value)` samples over the mask.
pub fn spatial_map(
    samples: &[([f64; 2], f64)],
    mask: &SegmentMask,
    bandwidth: Option<f64>,
) -> Result<SpatialMap, MeasureError> {
    if samples.is_empty() {
        return Err(MeasureError::NoSamples);
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(MeasureError::BadBandwidth(b)),
        None => default_bandwidth(&samples.iter().map(|s| s.0).collect::<Vec<_>>()),
    };
    let (x0, y0, x1, y1) = mask.bounding_box();
    let (width, height) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut values = Vec::with_capacity(width * height);
    for y in y0..=y1 {
        for x in x0..=x1 {
            values.push(
                mask.get(x, y)
                    .then(|| kernel_estimate(samples, [x as f64, y as f64], bw)),
            );
        }
    }
    Ok(SpatialMap {
        segment_id: mask.id.clone(),
        origin_px: [x0, y0],
        width,
        height,
        values,
        bandwidth_px: bw,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct MapSidecar<'a> {
    segment_id: &'a str,
    origin_px: [usize; 2],
    bandwidth_px: f64,
    samples: Vec<([f64; 2], f64)>,
}

/// Writes `<stem>.sfld` (background cells as NaN; the header's sigma slot holds
/// the bandwidth) and `<stem>.json` with the bandwidth and samples.
pub fn write_map(map: &SpatialMap, samples: &[([f64; 2], f64)], stem: impl AsRef<Path>) -> Result<(), MeasureError> {
    let stem = stem.as_ref();
    let raster = SfldRaster {
        width: map.width,
        height: map.height,
        sigma: map.bandwidth_px as f32,
        values: map.values.iter().map(|v| v.map_or(f32::NAN, |g| g as f32)).collect(),
    };
    write_sfld(&raster, stem.with_extension("sfld"))?;
    let side = MapSidecar {
        segment_id: &map.segment_id,
        origin_px: map.origin_px,
        bandwidth_px: map.bandwidth_px,
        samples: samples.to_vec(),
    };
    std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}
