//! Synthetic benchmark graphs shaped like a drop-cast film array.

use super::TourGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterLayout {
    pub columns: usize,
    pub rows: usize,
    pub plane_mm: [f64; 2],
    pub per_cluster: usize,
    /// Cluster centers move up to this far from their grid cell center.
    pub center_jitter_mm: f64,
    /// Contacts fall within this radius of their cluster center.
    pub cluster_radius_mm: f64,
    pub home_mm: [f64; 2],
}

impl Default for ClusterLayout {
    fn default() -> Self {
        ClusterLayout {
            columns: 5,
            rows: 7,
            plane_mm: [100.0, 150.0],
            per_cluster: 3,
            center_jitter_mm: 0.5,
            cluster_radius_mm: 3.0,
            home_mm: [0.0, 0.0],
        }
    }
}

/// Home plus `columns * rows * per_cluster` contacts; home is node 0.
pub fn clustered_graph(layout: &ClusterLayout, seed: u64) -> TourGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = [
        layout.plane_mm[0] / layout.columns as f64,
        layout.plane_mm[1] / layout.rows as f64,
    ];
    let mut pts = vec![layout.home_mm];
    for r in 0..layout.rows {
        for c in 0..layout.columns {
            let cx = (c as f64 + 0.5) * cell[0] + rng.random_range(-1.0..=1.0) * layout.center_jitter_mm;
            let cy = (r as f64 + 0.5) * cell[1] + rng.random_range(-1.0..=1.0) * layout.center_jitter_mm;
            for _ in 0..layout.per_cluster {
                // uniform over the disk
                let rad = layout.cluster_radius_mm * rng.random::<f64>().sqrt();
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                pts.push([cx + rad * ang.cos(), cy + rad * ang.sin()]);
            }
        }
    }
    TourGraph::from_points(&pts, 0).expect("home node exists")
}

/// `n` uniformly random points in a `side x side` square, start at node 0.
pub fn random_graph(n: usize, side: f64, seed: u64) -> TourGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    TourGraph::from_points(&pts, 0).expect("n >= 1")
}
