//! Topology features of a visibility graph.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::visibility::VisibilityGraph;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FeatureError {
    #[error("graph has {0} node(s); at least 2 are required")]
    TooSmall(usize),
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
}

/// The eight per-graph features, in export column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatureVector {
    pub average_degree: f64,
    pub average_clustering: f64,
    pub density: f64,
    pub transitivity: f64,
    pub diameter: f64,
    pub local_efficiency: f64,
    pub global_efficiency: f64,
    pub average_shortest_path: f64,
}

impl GraphFeatureVector {
    /// CSV column names, matching [`Self::to_array`].
    pub const NAMES: [&'static str; 8] = [
        "avg_degree",
        "avg_clustering",
        "density",
        "transitivity",
        "diameter",
        "local_eff",
        "global_eff",
        "avg_shortest_path",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.average_degree,
            self.average_clustering,
            self.density,
            self.transitivity,
            self.diameter,
            self.local_efficiency,
            self.global_efficiency,
            self.average_shortest_path,
        ]
    }
}

/// Hop distances from `source`, `usize::MAX` where unreachable.
fn bfs(g: &VisibilityGraph, source: usize, dist: &mut [usize], queue: &mut VecDeque<usize>) {
    dist.fill(usize::MAX);
    dist[source] = 0;
    queue.clear();
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        let next = dist[v] + 1;
        for &u in g.neighbors(v) {
            if dist[u] == usize::MAX {
                dist[u] = next;
                queue.push_back(u);
            }
        }
    }
}

/// Full hop-count distance matrix, one BFS per node.
pub fn all_pairs_shortest_paths(g: &VisibilityGraph) -> Result<Vec<Vec<usize>>, FeatureError> {
    let n = g.n_nodes();
    let rows: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map_init(
            || VecDeque::with_capacity(n),
            |queue, s| {
                let mut d = vec![0; n];
                bfs(g, s, &mut d, queue);
                d
            },
        )
        .collect();
    if let Some(first) = rows.first() {
        if let Some(v) = first.iter().position(|&d| d == usize::MAX) {
            return Err(FeatureError::Disconnected(v));
        }
    }
    Ok(rows)
}

#[derive(Default, Clone, Copy)]
struct PathSummary {
    sum: u64,
    inverse_sum: f64,
    max: usize,
}

impl PathSummary {
    fn merge(self, other: Self) -> Self {
        Self {
            sum: self.sum + other.sum,
            inverse_sum: self.inverse_sum + other.inverse_sum,
            max: self.max.max(other.max),
        }
    }
}

/// Number of common neighbours of `a` and `b` (sorted merge).
fn common_neighbors(g: &VisibilityGraph, a: usize, b: usize) -> usize {
    let (mut x, mut y) = (g.neighbors(a), g.neighbors(b));
    let mut count = 0;
    while let (Some(&p), Some(&q)) = (x.first(), y.first()) {
        match p.cmp(&q) {
            std::cmp::Ordering::Less => x = &x[1..],
            std::cmp::Ordering::Greater => y = &y[1..],
            std::cmp::Ordering::Equal => {
                count += 1;
                x = &x[1..];
                y = &y[1..];
            }
        }
    }
    count
}

/// Edges among the neighbours of `v`.
fn neighbor_links(g: &VisibilityGraph, v: usize) -> usize {
    let nb = g.neighbors(v);
    // each link (a, b) is seen from both a and b
    nb.iter().map(|&a| common_neighbors(g, v, a)).sum::<usize>() / 2
}

/// Mean of 1/d over unordered pairs of the subgraph induced by `v`'s
/// neighbours; unreachable pairs contribute 0.
fn neighborhood_efficiency(g: &VisibilityGraph, v: usize) -> f64 {
    let nb = g.neighbors(v);
    let k = nb.len();
    if k < 2 {
        return 0.0;
    }
    let local = |u: usize| nb.binary_search(&u).ok();
    let mut inverse_sum = 0.0;
    let mut dist = vec![usize::MAX; k];
    let mut queue = VecDeque::with_capacity(k);
    for s in 0..k {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            for &u in g.neighbors(nb[i]) {
                if let Some(j) = local(u) {
                    if dist[j] == usize::MAX {
                        dist[j] = dist[i] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        inverse_sum += dist[s + 1..]
            .iter()
            .filter(|&&d| d != usize::MAX)
            .map(|&d| 1.0 / d as f64)
            .sum::<f64>();
    }
    inverse_sum / (k * (k - 1) / 2) as f64
}

/// Computes the eight features of a connected graph with at least 2 nodes.
///
/// Distances are unweighted hop counts. Nodes of degree below 2 count as 0
/// towards the clustering and local-efficiency averages.
pub fn extract_graph_features(g: &VisibilityGraph) -> Result<GraphFeatureVector, FeatureError> {
    let n = g.n_nodes();
    if n < 2 {
        return Err(FeatureError::TooSmall(n));
    }
    let e = g.n_edges() as f64;
    let nf = n as f64;

    let paths = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], VecDeque::with_capacity(n)),
            |(dist, queue), s| {
                bfs(g, s, dist, queue);
                let mut acc = PathSummary::default();
                for &d in &dist[s + 1..] {
                    if d == usize::MAX {
                        return Err(FeatureError::Disconnected(s));
                    }
                    acc.sum += d as u64;
                    acc.inverse_sum += 1.0 / d as f64;
                    acc.max = acc.max.max(d);
                }
                Ok(acc)
            },
        )
        .try_reduce(PathSummary::default, |a, b| Ok(a.merge(b)))?;

    let per_node: Vec<(usize, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let k = g.degree(v);
            let links = neighbor_links(g, v);
            let clustering = if k < 2 {
                0.0
            } else {
                links as f64 / (k * (k - 1) / 2) as f64
            };
            (links, clustering, neighborhood_efficiency(g, v))
        })
        .collect();

    // each triangle is counted at all three corners
    let triangles = per_node.iter().map(|p| p.0).sum::<usize>() / 3;
    let triples: usize = (0..n)
        .map(|v| g.degree(v))
        .map(|k| k * k.saturating_sub(1) / 2)
        .sum();
    let pairs = nf * (nf - 1.0) / 2.0;

    Ok(GraphFeatureVector {
        average_degree: 2.0 * e / nf,
        average_clustering: per_node.iter().map(|p| p.1).sum::<f64>() / nf,
        density: e / pairs,
        transitivity: if triples == 0 {
            0.0
        } else {
            3.0 * triangles as f64 / triples as f64
        },
        diameter: paths.max as f64,
        local_efficiency: per_node.iter().map(|p| p.2).sum::<f64>() / nf,
        global_efficiency: paths.inverse_sum / pairs,
        average_shortest_path: paths.sum as f64 / pairs,
    })
}

/// Z-score statistics fitted on one set of feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    /// Fits per-column mean and population std. Constant columns get std 1.
    pub fn fit(rows: &[Vec<f64>]) -> Option<Self> {
        let first = rows.first()?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Some(Self { mean, std })
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}
