use super::{Planner, Tour, TourGraph};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

/// Largest graph solved by full best-first search.
pub const EXACT_LIMIT: usize = 15;
/// States kept per depth layer on larger graphs.
pub const BEAM_WIDTH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    /// Weight of the MST over the current node and all unvisited nodes.
    #[default]
    MinimumSpanningTree,
    /// Uniform-cost search.
    Zero,
}

/// MST weight over the nodes listed in `set` (Prim, O(m²)).
fn mst_weight(graph: &TourGraph, set: &[usize], scratch: &mut Vec<f64>) -> f64 {
    let m = set.len();
    if m < 2 {
        return 0.0;
    }
    scratch.clear();
    scratch.resize(m, f64::INFINITY);
    // scratch[i] < 0 marks membership in the tree
    let mut cur = 0;
    scratch[0] = -1.0;
    let mut total = 0.0;
    for _ in 1..m {
        let row = graph.row(set[cur]);
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for i in 0..m {
            let b = scratch[i];
            if b < 0.0 {
                continue;
            }
            let d = row[set[i]];
            let b = if d < b {
                scratch[i] = d;
                d
            } else {
                b
            };
            if b < next_d {
                next_d = b;
                next = i;
            }
        }
        total += next_d;
        scratch[next] = -1.0;
        cur = next;
    }
    total
}

fn heuristic(graph: &TourGraph, h: Heuristic, set: &[usize], scratch: &mut Vec<f64>) -> f64 {
    match h {
        Heuristic::MinimumSpanningTree => mst_weight(graph, set, scratch),
        Heuristic::Zero => 0.0,
    }
}

/// Open-loop tour by A* over `(current node, visited set)` states.
///
/// Exact for graphs up to [`EXACT_LIMIT`] nodes; larger graphs use a layered
/// beam of [`BEAM_WIDTH`] states ranked by `g + h`.
pub fn astar_otsp(graph: &TourGraph, h: Heuristic) -> Tour {
    let order = if graph.len() <= EXACT_LIMIT {
        exact(graph, h)
    } else {
        beam(graph, h, BEAM_WIDTH)
    };
    Tour::from_order(graph, order, Planner::AStar, 0)
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    node: usize,
    mask: u32,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // max-heap: smallest f first, then deepest g, then lowest (mask, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.mask.cmp(&self.mask))
            .then(other.node.cmp(&self.node))
    }
}

fn members(mask: u32, n: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..n).filter(|&i| mask & (1 << i) != 0));
}

fn exact(graph: &TourGraph, h: Heuristic) -> Vec<usize> {
    let n = graph.len();
    let start = graph.start();
    if n == 1 {
        return vec![start];
    }
    let full: u32 = ((1u64 << n) - 1) as u32;
    let mut scratch = Vec::new();
    let mut set = Vec::new();
    // h depends only on {current} ∪ unvisited, cached by that set
    let mut h_cache: HashMap<u32, f64> = HashMap::new();
    let mut h_of = |rest: u32, scratch: &mut Vec<f64>, set: &mut Vec<usize>| -> f64 {
        *h_cache.entry(rest).or_insert_with(|| {
            members(rest, n, set);
            heuristic(graph, h, set, scratch)
        })
    };

    let mut best_g: HashMap<(usize, u32), f64> = HashMap::new();
    let mut parent: HashMap<(usize, u32), usize> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let m0 = 1u32 << start;
    best_g.insert((start, m0), 0.0);
    let h0 = h_of(full, &mut scratch, &mut set);
    heap.push(Open { f: h0, g: 0.0, node: start, mask: m0 });

    while let Some(Open { g, node, mask, .. }) = heap.pop() {
        if g > best_g[&(node, mask)] {
            continue;
        }
        if mask == full {
            let mut order = vec![node];
            let (mut cur, mut m) = (node, mask);
            while cur != start || m != m0 {
                let p = parent[&(cur, m)];
                m &= !(1 << cur);
                cur = p;
                order.push(cur);
            }
            order.reverse();
            return order;
        }
        // every child's {current} ∪ unvisited equals this state's unvisited set
        let rest = full & !mask;
        let hc = h_of(rest, &mut scratch, &mut set);
        for j in 0..n {
            if mask & (1 << j) != 0 {
                continue;
            }
            let key = (j, mask | (1 << j));
            let gj = g + graph.dist(node, j);
            if best_g.get(&key).is_some_and(|&old| old <= gj) {
                continue;
            }
            best_g.insert(key, gj);
            parent.insert(key, node);
            heap.push(Open { f: gj + hc, g: gj, node: j, mask: key.1 });
        }
    }
    unreachable!("complete graph always admits a tour")
}

#[derive(Clone)]
struct BeamState {
    g: f64,
    path: Vec<usize>,
    visited: Vec<u64>,
}

fn beam(graph: &TourGraph, h: Heuristic, width: usize) -> Vec<usize> {
    let n = graph.len();
    let words = n.div_ceil(64);
    let start = graph.start();
    let mut visited = vec![0u64; words];
    visited[start / 64] |= 1 << (start % 64);
    let mut layer = vec![BeamState { g: 0.0, path: vec![start], visited }];
    let mut scratch = Vec::new();
    let mut rest = Vec::with_capacity(n);

    for _ in 1..n {
        // (f, g, parent, node); f = g + MST(parent's unvisited set)
        let mut children: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(layer.len() * n);
        // states that differ only in their current node share a heuristic value
        let mut h_cache: HashMap<&[u64], f64> = HashMap::new();
        for (pi, st) in layer.iter().enumerate() {
            rest.clear();
            rest.extend((0..n).filter(|&i| st.visited[i / 64] & (1 << (i % 64)) == 0));
            let hc = *h_cache
                .entry(&st.visited)
                .or_insert_with(|| heuristic(graph, h, &rest, &mut scratch));
            let cur = *st.path.last().unwrap();
            for &j in &rest {
                let g = st.g + graph.dist(cur, j);
                children.push((g + hc, g, pi, j));
            }
        }
        children.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
        // children reaching the same (node, visited set) share h, so the first
        // occurrence in f order also has the lowest g
        let mut seen: HashSet<(usize, Vec<u64>)> = HashSet::with_capacity(width);
        let mut next = Vec::with_capacity(width);
        for &(_, g, pi, j) in &children {
            if next.len() == width {
                break;
            }
            let mut v = layer[pi].visited.clone();
            v[j / 64] |= 1 << (j % 64);
            if !seen.insert((j, v.clone())) {
                continue;
            }
            let mut path = layer[pi].path.clone();
            path.push(j);
            next.push(BeamState { g, path, visited: v });
        }
        layer = next;
    }
    layer
        .into_iter()
        .min_by(|a, b| a.g.total_cmp(&b.g))
        .map(|s| s.path)
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_is_optimal() {
        let g = TourGraph::from_points(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], 0).unwrap();
        let t = astar_otsp(&g, Heuristic::MinimumSpanningTree);
        assert_eq!(t.order, vec![0, 1, 2]);
        assert_eq!(t.length_mm, 20.0);
    }

    #[test]
    fn zero_heuristic_agrees() {
        let pts = [[0.0, 0.0], [4.0, 1.0], [1.0, 3.0], [5.0, 5.0], [2.0, -2.0], [6.0, 0.5]];
        let g = TourGraph::from_points(&pts, 0).unwrap();
        let a = astar_otsp(&g, Heuristic::MinimumSpanningTree);
        let b = astar_otsp(&g, Heuristic::Zero);
        assert!((a.length_mm - b.length_mm).abs() < 1e-9);
    }

    #[test]
    fn beam_on_a_line() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 0.0]).collect();
        let g = TourGraph::from_points(&pts, 0).unwrap();
        let t = astar_otsp(&g, Heuristic::MinimumSpanningTree);
        assert!(g.is_open_tour(&t.order));
        assert!((t.length_mm - 19.0).abs() < 1e-9);
    }

    #[test]
    fn mst_weight_matches_square() {
        let g = TourGraph::from_points(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 0).unwrap();
        let mut s = Vec::new();
        assert!((mst_weight(&g, &[0, 1, 2, 3], &mut s) - 3.0).abs() < 1e-12);
    }
}
