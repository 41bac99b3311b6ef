use super::{Planner, PlannerConfig, RouteError, Tour, TourGraph};
use crate::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nearest-unvisited construction from `start` over an arbitrary `n x n` cost matrix.
pub fn greedy_construct(n: usize, start: usize, cost: &[f64]) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let row = &cost[cur * n..(cur + 1) * n];
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &d) in row.iter().enumerate() {
            // strict `<` keeps the lowest index on ties
            if !visited[j] && (d < best_d || best == usize::MAX) {
                best = j;
                best_d = d;
            }
        }
        visited[best] = true;
        order.push(best);
        cur = best;
    }
    order
}

/// Repeatedly steps to the nearest unvisited node (lowest index on ties).
pub fn greedy_dijkstra(graph: &TourGraph) -> Tour {
    let n = graph.len();
    let order = greedy_construct(n, graph.start(), &graph.dist);
    Tour::from_order(graph, order, Planner::Greedy, 0)
}

/// Tours of every generation, in order. Generation 0 uses the true distances;
/// generation g ≥ 1 perturbs each undirected edge by `U(-α d, α d)` drawn
/// from the stream `(seed, g)`. Lengths are always measured on true distances.
pub fn noisy_dijkstra_generations(graph: &TourGraph, cfg: &PlannerConfig) -> Result<Vec<Tour>, RouteError> {
    cfg.validate()?;
    let n = graph.len();
    let mut out = Vec::with_capacity(cfg.generations);
    out.push(Tour::from_order(
        graph,
        greedy_construct(n, graph.start(), &graph.dist),
        Planner::NoisyDijkstra,
        cfg.seed,
    ));
    let mut cost = vec![0.0; n * n];
    for g in 1..cfg.generations {
        perturb(graph, cfg.alpha, derive_seed(cfg.seed, g as u64), &mut cost);
        let order = greedy_construct(n, graph.start(), &cost);
        out.push(Tour::from_order(graph, order, Planner::NoisyDijkstra, cfg.seed));
    }
    Ok(out)
}

fn perturb(graph: &TourGraph, alpha: f64, seed: u64, cost: &mut [f64]) {
    let n = graph.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        for j in i + 1..n {
            let d = graph.dist(i, j);
            let u: f64 = rng.random();
            let v = d + alpha * d * (2.0 * u - 1.0);
            cost[i * n + j] = v;
            cost[j * n + i] = v;
        }
    }
}

/// Best true-length tour over all generations (earliest wins ties).
pub fn noisy_dijkstra(graph: &TourGraph, cfg: &PlannerConfig) -> Result<Tour, RouteError> {
    cfg.validate()?;
    let n = graph.len();
    let mut best = Tour::from_order(
        graph,
        greedy_construct(n, graph.start(), &graph.dist),
        Planner::NoisyDijkstra,
        cfg.seed,
    );
    let mut cost = vec![0.0; n * n];
    for g in 1..cfg.generations {
        perturb(graph, cfg.alpha, derive_seed(cfg.seed, g as u64), &mut cost);
        let order = greedy_construct(n, graph.start(), &cost);
        let len = graph.path_length(&order);
        if len < best.length_mm {
            best.order = order;
            best.length_mm = len;
        }
    }
    Ok(best)
}
