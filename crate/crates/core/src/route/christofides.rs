use super::{Planner, Tour, TourGraph};
use mwmatching::{Matching, SENTINEL};

/// Integer resolution used when handing edge weights to the blossom solver.
const WEIGHT_STEPS: f64 = 1.0e6;

/// Prim's MST over the whole graph as `(parent, child)` edges.
pub(crate) fn minimum_spanning_tree(graph: &TourGraph, root: usize) -> Vec<(usize, usize)> {
    let n = graph.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    best[root] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            edges.push((parent[u], u));
        }
        for v in 0..n {
            let d = graph.dist(u, v);
            if !in_tree[v] && d < best[v] {
                best[v] = d;
                parent[v] = u;
            }
        }
    }
    edges
}

/// Minimum-weight perfect matching on an even-sized vertex subset.
///
/// Weights are quantized to `max_d / 1e6` before the blossom solve.
pub fn min_weight_perfect_matching(graph: &TourGraph, vertices: &[usize]) -> Vec<(usize, usize)> {
    let m = vertices.len();
    if m == 0 {
        return Vec::new();
    }
    if m == 2 {
        return vec![(vertices[0], vertices[1])];
    }
    let mut max_d: f64 = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            max_d = max_d.max(graph.dist(vertices[a], vertices[b]));
        }
    }
    let scale = if max_d > 0.0 { WEIGHT_STEPS / max_d } else { 0.0 };
    let mut edges = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            let q = (graph.dist(vertices[a], vertices[b]) * scale).round() as i32;
            edges.push((a, b, 2 * (WEIGHT_STEPS as i32 + 1 - q)));
        }
    }
    let mate = Matching::new(edges).max_cardinality().solve();
    let mut pairs = Vec::with_capacity(m / 2);
    for (a, &b) in mate.iter().enumerate() {
        if b != SENTINEL && a < b {
            pairs.push((vertices[a], vertices[b]));
        }
    }
    pairs
}

/// Closed Christofides tour starting at the graph's start node.
pub fn christofides_closed(graph: &TourGraph) -> Vec<usize> {
    let n = graph.len();
    let start = graph.start();
    if n <= 2 {
        let mut order = vec![start];
        order.extend((0..n).filter(|&i| i != start));
        return order;
    }
    let mst = minimum_spanning_tree(graph, start);
    let mut degree = vec![0usize; n];
    for &(a, b) in &mst {
        degree[a] += 1;
        degree[b] += 1;
    }
    let odd: Vec<usize> = (0..n).filter(|&v| degree[v] % 2 == 1).collect();
    let matching = min_weight_perfect_matching(graph, &odd);

    // multigraph adjacency with edge ids so parallel edges are used once each
    let all_edges: Vec<(usize, usize)> = mst.iter().chain(matching.iter()).copied().collect();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (id, &(a, b)) in all_edges.iter().enumerate() {
        adj[a].push((b, id));
        adj[b].push((a, id));
    }
    for list in &mut adj {
        list.sort_unstable();
        list.reverse();
    }
    let mut used = vec![false; all_edges.len()];
    let mut stack = vec![start];
    let mut circuit = Vec::with_capacity(all_edges.len() + 1);
    while let Some(&v) = stack.last() {
        let mut advanced = false;
        while let Some(&(w, id)) = adj[v].last() {
            adj[v].pop();
            if !used[id] {
                used[id] = true;
                stack.push(w);
                advanced = true;
                break;
            }
        }
        if !advanced {
            circuit.push(stack.pop().unwrap());
        }
    }
    circuit.reverse();

    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for v in circuit {
        if !std::mem::replace(&mut seen[v], true) {
            order.push(v);
        }
    }
    order
}

/// Open-loop Christofides: the closed tour minus the heavier of the two edges at the start.
pub fn christofides_otsp(graph: &TourGraph) -> Tour {
    let mut order = christofides_closed(graph);
    if order.len() > 2 {
        let first = graph.dist(order[0], order[1]);
        let last = graph.dist(order[order.len() - 1], order[0]);
        if first > last {
            order[1..].reverse();
        }
    }
    Tour::from_order(graph, order, Planner::Christofides, 0)
}
