//! Marlin-flavoured G-code for a planned tour, plus a parser that re-checks
//! motion safety and reconstructs contact-point travel from the file.

use crate::calibration::{contact_point, effector_target, EffectorGeometry, EffectorTarget};
use crate::route::{Tour, TourGraph};
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};

#[derive(Debug, thiserror::Error)]
pub enum GcodeError {
    #[error("tour is empty")]
    EmptyTour,
    #[error("tour does not start at the graph's start node")]
    BadStart,
    #[error("tour references node {0}, graph has {1}")]
    BadNode(usize, usize),
    #[error("node {node}: {axis}={value:.3} outside the work envelope [{min}, {max}]")]
    OutsideEnvelope {
        node: usize,
        axis: char,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid G-code settings: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotaryAxis {
    #[default]
    A,
    E,
}

impl RotaryAxis {
    pub fn letter(self) -> char {
        match self {
            RotaryAxis::A => 'A',
            RotaryAxis::E => 'E',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkEnvelope {
    pub x_mm: [f64; 2],
    pub y_mm: [f64; 2],
    pub z_mm: [f64; 2],
}

impl Default for WorkEnvelope {
    fn default() -> Self {
        WorkEnvelope {
            x_mm: [-100.0, 300.0],
            y_mm: [-100.0, 300.0],
            z_mm: [-5.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcodeConfig {
    pub safe_z_mm: f64,
    pub contact_z_mm: f64,
    pub feed_xy_mm_min: f64,
    pub feed_z_mm_min: f64,
    /// Feed for the rotary word, degrees per minute.
    pub feed_rotary: f64,
    pub rotary_axis: RotaryAxis,
    /// Pause at depth while the external driver runs its sweep.
    pub dwell_ms: u64,
    pub envelope: WorkEnvelope,
}

impl Default for GcodeConfig {
    fn default() -> Self {
        GcodeConfig {
            safe_z_mm: 5.0,
            contact_z_mm: 0.0,
            feed_xy_mm_min: 3000.0,
            feed_z_mm_min: 600.0,
            feed_rotary: 1800.0,
            rotary_axis: RotaryAxis::A,
            dwell_ms: 2000,
            envelope: WorkEnvelope::default(),
        }
    }
}

impl GcodeConfig {
    pub fn validate(&self) -> Result<(), GcodeError> {
        let bad = |m: &str| Err(GcodeError::InvalidConfig(m.into()));
        if !(self.safe_z_mm > self.contact_z_mm) {
            return bad("safe_z_mm must exceed contact_z_mm");
        }
        if !(self.feed_xy_mm_min > 0.0 && self.feed_z_mm_min > 0.0 && self.feed_rotary > 0.0) {
            return bad("feed rates must be positive");
        }
        let e = &self.envelope;
        if !(e.x_mm[0] < e.x_mm[1] && e.y_mm[0] < e.y_mm[1] && e.z_mm[0] < e.z_mm[1]) {
            return bad("envelope bounds must be increasing");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcodeProgram {
    pub lines: Vec<String>,
    pub safe_z_mm: f64,
    pub feed_xy_mm_min: f64,
    pub feed_z_mm_min: f64,
    pub contact_cycles: usize,
}

impl fmt::Display for GcodeProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Fixed nine-decimal rendering with trailing zeros and negative zero removed.
fn num(v: f64) -> String {
    let mut s = format!("{v:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn check(node: usize, axis: char, value: f64, range: [f64; 2]) -> Result<(), GcodeError> {
    if value.is_finite() && value >= range[0] && value <= range[1] {
        Ok(())
    } else {
        Err(GcodeError::OutsideEnvelope {
            node,
            axis,
            value,
            min: range[0],
            max: range[1],
        })
    }
}

/// One contact cycle per tour node after the start.
///
/// Each cycle lifts to safe Z, rapids to the effector target, turns the rotary
/// axis, plunges straight down, waits, tags the contact with a `;PROBE`
/// comment and dwells, then retracts.
pub fn emit_gcode(
    tour: &Tour,
    graph: &TourGraph,
    geom: &EffectorGeometry,
    cfg: &GcodeConfig,
) -> Result<GcodeProgram, GcodeError> {
    cfg.validate()?;
    let (&first, rest) = tour.order.split_first().ok_or(GcodeError::EmptyTour)?;
    if first != graph.start() {
        return Err(GcodeError::BadStart);
    }
    let n = graph.len();
    if let Some(&bad) = tour.order.iter().find(|&&i| i >= n) {
        return Err(GcodeError::BadNode(bad, n));
    }
    let env = &cfg.envelope;
    check(first, 'Z', cfg.safe_z_mm, env.z_mm)?;
    check(first, 'Z', cfg.contact_z_mm, env.z_mm)?;

    let rot = cfg.rotary_axis.letter();
    let home = &graph.nodes()[first];
    let mut lines = vec![
        format!("; contact tour: {} waypoints, {} mm", rest.len(), num(tour.length_mm)),
        "G21".to_string(),
        "G90".to_string(),
        format!("G0 Z{} F{}", num(cfg.safe_z_mm), num(cfg.feed_z_mm_min)),
    ];
    // the home contact sits at yaw 0, where the effector target equals the contact point
    check(first, 'X', home.x_mm, env.x_mm)?;
    check(first, 'Y', home.y_mm, env.y_mm)?;
    lines.push(format!("G0 {rot}0 F{}", num(cfg.feed_rotary)));
    lines.push(format!(
        "G0 X{} Y{} F{}",
        num(home.x_mm),
        num(home.y_mm),
        num(cfg.feed_xy_mm_min)
    ));

    for &i in rest {
        let node = &graph.nodes()[i];
        let t = effector_target(node.x_mm, node.y_mm, node.theta_deg, geom);
        check(i, 'X', t.x, env.x_mm)?;
        check(i, 'Y', t.y, env.y_mm)?;
        let (x, y) = (num(t.x), num(t.y));
        let tag = match &node.pose_ref {
            Some(p) => format!("segment={} pose={} node={i}", p.segment_id, p.pose_index),
            None => format!("node={i}"),
        };
        lines.push(format!("G0 X{x} Y{y} F{}", num(cfg.feed_xy_mm_min)));
        lines.push(format!("G0 {rot}{} F{}", num(t.theta_deg), num(cfg.feed_rotary)));
        lines.push(format!(
            "G1 X{x} Y{y} Z{} F{}",
            num(cfg.contact_z_mm),
            num(cfg.feed_z_mm_min)
        ));
        lines.push("M400".to_string());
        lines.push(format!(";PROBE {tag}"));
        lines.push(format!("G4 P{}", cfg.dwell_ms));
        lines.push(format!("G0 Z{} F{}", num(cfg.safe_z_mm), num(cfg.feed_z_mm_min)));
    }
    lines.push("M400".to_string());
    lines.push("; end".to_string());
    Ok(GcodeProgram {
        lines,
        safe_z_mm: cfg.safe_z_mm,
        feed_xy_mm_min: cfg.feed_xy_mm_min,
        feed_z_mm_min: cfg.feed_z_mm_min,
        contact_cycles: rest.len(),
    })
}

/// Result of replaying a program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inspection {
    pub contact_cycles: usize,
    /// Tags of the `;PROBE` comments, in file order.
    pub probes: Vec<String>,
    /// Contact point at each plunge, reconstructed through the forward model.
    pub contacts_mm: Vec<[f64; 2]>,
    /// Contact-point travel from the first XY position through every plunge.
    pub travel_mm: f64,
    /// Lines that moved X, Y or the rotary axis below safe Z.
    pub violations: Vec<usize>,
}

impl Inspection {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replays `text` and checks that nothing moves laterally or turns while Z is
/// below `safe_z_mm`, and that Z only descends with X and Y held fixed.
pub fn inspect_gcode(
    text: &str,
    geom: &EffectorGeometry,
    safe_z_mm: f64,
    rotary: RotaryAxis,
) -> Result<Inspection, GcodeError> {
    const EPS: f64 = 1e-9;
    let rot = rotary.letter();
    let mut out = Inspection::default();
    let (mut x, mut y, mut z, mut a) = (None::<f64>, None::<f64>, None::<f64>, 0.0);
    let mut last_contact: Option<[f64; 2]> = None;
    let mut absolute = false;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let trimmed = raw.trim();
        if let Some(tag) = trimmed.strip_prefix(";PROBE") {
            out.probes.push(tag.trim().to_string());
            continue;
        }
        let code = trimmed.split(';').next().unwrap_or("").trim();
        if code.is_empty() {
            continue;
        }
        let cmd = code.split_whitespace().next().unwrap();
        let w = |c: char| -> Result<Option<f64>, GcodeError> {
            for word in code.split_whitespace().skip(1) {
                if word.starts_with(c) {
                    return word[1..].parse::<f64>().map(Some).map_err(|e| GcodeError::Parse {
                        line,
                        reason: format!("{word}: {e}"),
                    });
                }
            }
            Ok(None)
        };
        match cmd {
            "G90" => absolute = true,
            "G91" => {
                return Err(GcodeError::Parse {
                    line,
                    reason: "relative positioning is not supported".into(),
                })
            }
            "G0" | "G1" => {
                if !absolute {
                    return Err(GcodeError::Parse {
                        line,
                        reason: "motion before G90".into(),
                    });
                }
                let (nx, ny, nz, na) = (w('X')?, w('Y')?, w('Z')?, w(rot)?);
                let moved_xy = nx.is_some_and(|v| x.is_none_or(|o| (v - o).abs() > EPS))
                    || ny.is_some_and(|v| y.is_none_or(|o| (v - o).abs() > EPS));
                let turned = na.is_some_and(|v| (v - a).abs() > EPS);
                let below = |zv: Option<f64>| zv.is_some_and(|zv| zv < safe_z_mm - EPS);
                // lateral motion or rotation is unsafe if the tool is low before or after the move
                if (moved_xy || turned) && (below(z) || below(nz.or(z))) {
                    out.violations.push(line);
                }
                let x_before = x;
                if let Some(v) = nx {
                    x = Some(v);
                }
                if let Some(v) = ny {
                    y = Some(v);
                }
                if let Some(v) = na {
                    a = v;
                }
                // the first placed XY position is where travel is measured from
                if last_contact.is_none() && x_before.is_none() {
                    if let (Some(px), Some(py)) = (x, y) {
                        let c = contact_point(&EffectorTarget { x: px, y: py, theta_deg: a }, geom);
                        last_contact = Some(c);
                    }
                }
                if let Some(v) = nz {
                    let plunging = z.is_some_and(|o| v < o - EPS) && v < safe_z_mm - EPS;
                    z = Some(v);
                    if plunging {
                        let (px, py) = x.zip(y).ok_or_else(|| GcodeError::Parse {
                            line,
                            reason: "plunge before any XY position".into(),
                        })?;
                        let c = contact_point(&EffectorTarget { x: px, y: py, theta_deg: a }, geom);
                        if let Some(p) = last_contact {
                            out.travel_mm += (c[0] - p[0]).hypot(c[1] - p[1]);
                        }
                        last_contact = Some(c);
                        out.contacts_mm.push(c);
                        out.contact_cycles += 1;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Convenience wrapper that renders the program to text first.
pub fn inspect_program(
    program: &GcodeProgram,
    geom: &EffectorGeometry,
    rotary: RotaryAxis,
) -> Result<Inspection, GcodeError> {
    let mut s = String::new();
    let _ = write!(s, "{program}");
    inspect_gcode(&s, geom, program.safe_z_mm, rotary)
}
