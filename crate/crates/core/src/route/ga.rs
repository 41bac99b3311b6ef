use super::{Planner, RouteError, Tour, TourGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Probability that a child receives one swap mutation.
    pub mutation_rate: f64,
    pub tournament: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 10,
            generations: 1000,
            mutation_rate: 0.8,
            tournament: 3,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), RouteError> {
        if self.population < 2 {
            return Err(RouteError::InvalidConfig("population must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(RouteError::InvalidConfig("mutation_rate must be in [0, 1]".into()));
        }
        if self.tournament == 0 {
            return Err(RouteError::InvalidConfig("tournament must be >= 1".into()));
        }
        Ok(())
    }
}

/// Order crossover on the free tail (everything after the fixed start).
fn order_crossover(a: &[usize], b: &[usize], rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let m = a.len();
    let i = rng.random_range(0..m);
    let j = rng.random_range(i..m);
    let mut child = vec![usize::MAX; m];
    let mut taken = vec![false; n];
    for k in i..=j {
        child[k] = a[k];
        taken[a[k]] = true;
    }
    let mut fill = b.iter().filter(|&&v| !taken[v]);
    for slot in child.iter_mut().filter(|s| **s == usize::MAX) {
        *slot = *fill.next().unwrap();
    }
    child
}

/// Genetic search over open tours with a fixed start node.
pub fn ga_otsp(graph: &TourGraph, cfg: &GaConfig) -> Result<Tour, RouteError> {
    cfg.validate()?;
    let n = graph.len();
    let start = graph.start();
    let tail: Vec<usize> = (0..n).filter(|&i| i != start).collect();
    if tail.len() < 2 {
        let mut order = vec![start];
        order.extend(tail);
        return Ok(Tour::from_order(graph, order, Planner::Genetic, cfg.seed));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let length = |t: &[usize]| {
        let mut len = graph.dist(start, t[0]);
        for w in t.windows(2) {
            len += graph.dist(w[0], w[1]);
        }
        len
    };

    let mut pop: Vec<(Vec<usize>, f64)> = (0..cfg.population)
        .map(|_| {
            let mut t = tail.clone();
            t.shuffle(&mut rng);
            let l = length(&t);
            (t, l)
        })
        .collect();

    let best_index = |pop: &[(Vec<usize>, f64)]| {
        let mut b = 0;
        for (i, p) in pop.iter().enumerate() {
            if p.1 < pop[b].1 {
                b = i;
            }
        }
        b
    };

    for _ in 0..cfg.generations {
        let elite = pop[best_index(&pop)].clone();
        let mut next = Vec::with_capacity(cfg.population);
        next.push(elite);
        while next.len() < cfg.population {
            let pick = |rng: &mut ChaCha8Rng| {
                let mut b = rng.random_range(0..pop.len());
                for _ in 1..cfg.tournament {
                    let c = rng.random_range(0..pop.len());
                    if pop[c].1 < pop[b].1 {
                        b = c;
                    }
                }
                b
            };
            let pa = pick(&mut rng);
            let pb = pick(&mut rng);
            let mut child = order_crossover(&pop[pa].0, &pop[pb].0, &mut rng, n);
            if rng.random::<f64>() < cfg.mutation_rate {
                let i = rng.random_range(0..child.len());
                let j = rng.random_range(0..child.len());
                child.swap(i, j);
            }
            let l = length(&child);
            next.push((child, l));
        }
        pop = next;
    }

    let (best, _) = pop.swap_remove(best_index(&pop));
    let mut order = Vec::with_capacity(n);
    order.push(start);
    order.extend(best);
    Ok(Tour::from_order(graph, order, Planner::Genetic, cfg.seed))
}
