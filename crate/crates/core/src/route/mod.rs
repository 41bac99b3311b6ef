//! Open-loop tours over contact poses.
//!
//! Every planner returns a [`Tour`] that starts at the graph's start node,
//! visits each node exactly once and does not return. Ties between equal
//! distances are always broken toward the lower node index.

mod astar;
mod bench;
mod christofides;
mod ga;
mod greedy;
pub mod synth;

pub use astar::{astar_otsp, Heuristic, BEAM_WIDTH, EXACT_LIMIT};
pub use bench::{benchmark, plan_tour, BenchmarkRow, BenchmarkTable, PlannerSummary};
pub(crate) use bench::median;
pub use christofides::{christofides_closed, christofides_otsp, min_weight_perfect_matching};
pub use ga::{ga_otsp, GaConfig};
pub use greedy::{greedy_construct, greedy_dijkstra, noisy_dijkstra, noisy_dijkstra_generations};

use crate::calibration::{CalibrationError, FrameCalibration};
use crate::optimizer::PoseSet;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum RouteError {
    #[error("no valid poses to plan over")]
    NoValidPoses,
    #[error("graph needs at least one node")]
    EmptyGraph,
    #[error("start index {start} out of range for {n} nodes")]
    BadStart { start: usize, n: usize },
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Back-reference from a graph node to the pose it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoseRef {
    pub segment_id: String,
    pub pose_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub x_mm: f64,
    pub y_mm: f64,
    /// Contact yaw in the robot frame, degrees in `[0, 180)`.
    pub theta_deg: f64,
    pub pose_ref: Option<PoseRef>,
}

/// Complete Euclidean graph with a dense distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TourGraph {
    nodes: Vec<GraphNode>,
    dist: Vec<f64>,
    start: usize,
}

impl TourGraph {
    pub fn new(nodes: Vec<GraphNode>, start: usize) -> Result<Self, RouteError> {
        let n = nodes.len();
        if n == 0 {
            return Err(RouteError::EmptyGraph);
        }
        if start >= n {
            return Err(RouteError::BadStart { start, n });
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = (nodes[i].x_mm - nodes[j].x_mm).hypot(nodes[i].y_mm - nodes[j].y_mm);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(TourGraph { nodes, dist, start })
    }

    /// Graph over bare points; node `start` is the start.
    pub fn from_points(points: &[[f64; 2]], start: usize) -> Result<Self, RouteError> {
        let nodes = points
            .iter()
            .map(|p| GraphNode {
                x_mm: p[0],
                y_mm: p[1],
                theta_deg: 0.0,
                pose_ref: None,
            })
            .collect();
        TourGraph::new(nodes, start)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.nodes.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.dist[i * n..(i + 1) * n]
    }

    /// Sum of consecutive edge lengths along `order` (no return edge).
    pub fn path_length(&self, order: &[usize]) -> f64 {
        order.windows(2).map(|w| self.dist(w[0], w[1])).sum()
    }

    /// Length of the closed cycle through `order`.
    pub fn cycle_length(&self, order: &[usize]) -> f64 {
        match (order.first(), order.last()) {
            (Some(&a), Some(&b)) => self.path_length(order) + self.dist(b, a),
            _ => 0.0,
        }
    }

    /// True when `order` is a permutation of all nodes beginning at the start.
    pub fn is_open_tour(&self, order: &[usize]) -> bool {
        if order.len() != self.len() || order.first() != Some(&self.start) {
            return false;
        }
        let mut seen = vec![false; self.len()];
        order.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planner {
    #[serde(rename = "greedy_dijkstra")]
    Greedy,
    NoisyDijkstra,
    Christofides,
    #[serde(rename = "astar")]
    AStar,
    Genetic,
}

impl Planner {
    pub const ALL: [Planner; 5] = [
        Planner::Greedy,
        Planner::NoisyDijkstra,
        Planner::Christofides,
        Planner::AStar,
        Planner::Genetic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Planner::Greedy => "greedy_dijkstra",
            Planner::NoisyDijkstra => "noisy_dijkstra",
            Planner::Christofides => "christofides",
            Planner::AStar => "astar",
            Planner::Genetic => "genetic",
        }
    }
}

impl std::str::FromStr for Planner {
    type Err = RouteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Planner::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| RouteError::InvalidConfig(format!("unknown planner {s:?}")))
    }
}

impl fmt::Display for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length_mm: f64,
    pub algorithm: Planner,
    pub seed: u64,
}

impl Tour {
    fn from_order(graph: &TourGraph, order: Vec<usize>, algorithm: Planner, seed: u64) -> Tour {
        let length_mm = graph.path_length(&order);
        Tour {
            order,
            length_mm,
            algorithm,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Relative edge-noise amplitude: `ε ~ U(-α d, α d)`.
    pub alpha: f64,
    pub generations: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            alpha: 0.02,
            generations: 1000,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), RouteError> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(RouteError::InvalidConfig("alpha must be >= 0".into()));
        }
        if self.generations == 0 {
            return Err(RouteError::InvalidConfig("generations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Robot-frame graph over all valid poses, with `home_mm` as node 0.
///
/// Pose pixel coordinates are placed in the plane with each set's pixel frame
/// and then rectified with `calib`.
pub fn build_graph(
    pose_sets: &[PoseSet],
    calib: &FrameCalibration,
    home_mm: [f64; 2],
) -> Result<TourGraph, RouteError> {
    let mut nodes = vec![GraphNode {
        x_mm: home_mm[0],
        y_mm: home_mm[1],
        theta_deg: 0.0,
        pose_ref: None,
    }];
    for set in pose_sets {
        for (i, (pose, &ok)) in set.poses.iter().zip(&set.pose_valid).enumerate() {
            if !ok {
                continue;
            }
            let plane = set.frame.to_plane(pose.x, pose.y);
            let robot = calib.rectify(plane)?;
            let heading = calib.rectify_heading(plane, pose.theta)?;
            let theta_deg = heading.to_degrees().rem_euclid(180.0);
            nodes.push(GraphNode {
                x_mm: robot[0],
                y_mm: robot[1],
                theta_deg: if theta_deg >= 180.0 { 0.0 } else { theta_deg },
                pose_ref: Some(PoseRef {
                    segment_id: set.segment_id.clone(),
                    pose_index: i,
                }),
            });
        }
    }
    if nodes.len() == 1 {
        return Err(RouteError::NoValidPoses);
    }
    TourGraph::new(nodes, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_distances() {
        let g = TourGraph::from_points(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], 0).unwrap();
        assert_eq!(g.row(0), &[0.0, 10.0, 20.0]);
        assert_eq!(g.dist(2, 1), 10.0);
    }

    #[test]
    fn open_tour_check() {
        let g = TourGraph::from_points(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], 0).unwrap();
        assert!(g.is_open_tour(&[0, 2, 1]));
        assert!(!g.is_open_tour(&[1, 0, 2]));
        assert!(!g.is_open_tour(&[0, 1, 1]));
        assert!(!g.is_open_tour(&[0, 1]));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(TourGraph::from_points(&[], 0), Err(RouteError::EmptyGraph)));
        assert!(matches!(
            TourGraph::from_points(&[[0.0, 0.0]], 1),
            Err(RouteError::BadStart { .. })
        ));
        let cfg = PlannerConfig {
            alpha: -0.1,
            ..PlannerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
