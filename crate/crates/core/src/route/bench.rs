use super::{
    astar_otsp, christofides_otsp, ga_otsp, greedy_dijkstra, noisy_dijkstra, GaConfig, Heuristic, Planner,
    PlannerConfig, RouteError, Tour, TourGraph,
};
use crate::seed::derive_seed;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub graph_id: usize,
    pub algorithm: Planner,
    pub length_mm: f64,
    pub wall_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    pub algorithm: Planner,
    pub count: usize,
    pub median_mm: f64,
    /// Population variance of tour lengths across graphs, mm².
    pub variance_mm2: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl BenchmarkTable {
    pub fn lengths(&self, algorithm: Planner) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .map(|r| r.length_mm)
            .collect()
    }

    pub fn summary(&self, algorithm: Planner) -> PlannerSummary {
        let rows: Vec<&BenchmarkRow> = self.rows.iter().filter(|r| r.algorithm == algorithm).collect();
        let count = rows.len();
        let mut lengths: Vec<f64> = rows.iter().map(|r| r.length_mm).collect();
        let mean = lengths.iter().sum::<f64>() / count as f64;
        let variance_mm2 = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / count as f64;
        let mean_wall_ms = rows.iter().map(|r| r.wall_ms).sum::<f64>() / count as f64;
        PlannerSummary {
            algorithm,
            count,
            median_mm: median(&mut lengths),
            variance_mm2,
            mean_wall_ms,
        }
    }

    /// One summary per planner that appears in the table, in [`Planner::ALL`] order.
    pub fn summaries(&self) -> Vec<PlannerSummary> {
        Planner::ALL
            .iter()
            .filter(|p| self.rows.iter().any(|r| r.algorithm == **p))
            .map(|&p| self.summary(p))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "graph_id,algorithm,length_mm,wall_ms,seed")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:.6},{:.3},{}", r.graph_id, r.algorithm, r.length_mm, r.wall_ms, r.seed)?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "algorithm,count,median_mm,variance_mm2,mean_wall_ms")?;
        for s in self.summaries() {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.3}",
                s.algorithm, s.count, s.median_mm, s.variance_mm2, s.mean_wall_ms
            )?;
        }
        Ok(())
    }
}

/// Runs one planner; `seed` overrides the seeds in `cfg` and `ga`.
pub fn plan_tour(
    planner: Planner,
    graph: &TourGraph,
    cfg: &PlannerConfig,
    ga: &GaConfig,
    seed: u64,
) -> Result<Tour, RouteError> {
    match planner {
        Planner::Greedy => Ok(greedy_dijkstra(graph)),
        Planner::NoisyDijkstra => noisy_dijkstra(graph, &PlannerConfig { seed, ..*cfg }),
        Planner::Christofides => Ok(christofides_otsp(graph)),
        Planner::AStar => Ok(astar_otsp(graph, Heuristic::MinimumSpanningTree)),
        Planner::Genetic => ga_otsp(graph, &GaConfig { seed, ..*ga }),
    }
}

/// Runs every planner in `planners` on every graph. Graph `i` uses the seed
/// `derive_seed(cfg.seed, i)` for the stochastic planners.
pub fn benchmark(
    graphs: &[TourGraph],
    planners: &[Planner],
    cfg: &PlannerConfig,
    ga: &GaConfig,
) -> Result<BenchmarkTable, RouteError> {
    cfg.validate()?;
    ga.validate()?;
    let mut rows = Vec::with_capacity(graphs.len() * planners.len());
    // sequential on purpose: wall times stay comparable between planners
    for (graph_id, graph) in graphs.iter().enumerate() {
        let seed = derive_seed(cfg.seed, graph_id as u64);
        for &planner in planners {
            let t0 = Instant::now();
            let tour = plan_tour(planner, graph, cfg, ga, seed)?;
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            log::debug!("graph {graph_id} {planner}: {:.3} mm in {wall_ms:.1} ms", tour.length_mm);
            rows.push(BenchmarkRow {
                graph_id,
                algorithm: planner,
                length_mm: tour.length_mm,
                wall_ms,
                seed: tour.seed,
            });
        }
    }
    Ok(BenchmarkTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_graph_five_rows() {
        let g = TourGraph::from_points(&[[0.0, 0.0], [1.0, 2.0], [3.0, 1.0], [2.0, 4.0]], 0).unwrap();
        let cfg = PlannerConfig {
            generations: 20,
            ..PlannerConfig::default()
        };
        let ga = GaConfig {
            generations: 20,
            ..GaConfig::default()
        };
        let t = benchmark(&[g], &Planner::ALL, &cfg, &ga).unwrap();
        assert_eq!(t.rows.len(), 5);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("graph_id,algorithm,length_mm,wall_ms,seed"));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
