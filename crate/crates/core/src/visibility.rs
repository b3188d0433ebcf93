//! Natural visibility graphs.
//!
//! Two points `a < b` of a series see each other when every point `c`
//! strictly between them lies strictly below the chord joining them:
//!
//! ```text
//! y_c < y_b + (y_a - y_b) * (t_b - t_c) / (t_b - t_a)
//! ```
//!
//! The inequality is evaluated with an exact orientation predicate, so the
//! result does not depend on rounding and collinear points always block.
//! [`build_vg_naive`] tests the condition literally for every pair;
//! [`build_vg_fast`] splits the series at its maximum, which no chord
//! crosses, and recovers the edges through the maximum with a slope sweep.

use robust::{orient2d, Coord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{envelope_peaks, AudioClip, PeakParams, SignalError, TimeSeries};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("series too short for a graph: {0} point(s)")]
    TooShort(usize),
    #[error("times are not strictly increasing at index {0}")]
    NonIncreasingTime(usize),
    #[error("only {0} peak(s) found, a graph needs at least 2")]
    NoPeaks(usize),
    #[error("invalid edge ({0}, {1}) for a graph of {2} nodes")]
    InvalidEdge(usize, usize, usize),
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Undirected simple graph with sorted adjacency in compressed-row layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl VisibilityGraph {
    /// Builds a graph from an arbitrary edge list. Duplicate edges and
    /// either orientation of a pair are merged; self-loops are rejected.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut pairs = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a >= n_nodes || b >= n_nodes {
                return Err(GraphError::InvalidEdge(a, b, n_nodes));
            }
            pairs.push((a.min(b), a.max(b)));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::from_sorted_pairs(n_nodes, &pairs))
    }

    fn from_sorted_pairs(n_nodes: usize, pairs: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n_nodes];
        for &(a, b) in pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n_nodes].to_vec();
        let mut neighbors = vec![0usize; pairs.len() * 2];
        for &(a, b) in pairs {
            neighbors[cursor[a]] = b;
            cursor[a] += 1;
            neighbors[cursor[b]] = a;
            cursor[b] += 1;
        }
        for v in 0..n_nodes {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self { offsets, neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for a in 0..self.n_nodes() {
            out.extend(
                self.neighbors(a)
                    .iter()
                    .filter(|&&b| b > a)
                    .map(|&b| (a, b)),
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let export = GraphExport {
            n_nodes: self.n_nodes(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
        };
        serde_json::to_string(&export).expect("graph export serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let g: GraphExport = serde_json::from_str(s)?;
        let edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::from_edges(g.n_nodes, &edges)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphExport {
    n_nodes: usize,
    edges: Vec<[usize; 2]>,
}

#[inline]
fn coord(series: &TimeSeries, i: usize) -> Coord<f64> {
    let (x, y) = series.point(i);
    Coord { x, y }
}

/// True when point `c` lies strictly below the chord from `a` to `b`
/// (`t_a < t_b`). Exact for all finite inputs.
#[inline]
fn below_chord(series: &TimeSeries, a: usize, b: usize, c: usize) -> bool {
    orient2d(coord(series, a), coord(series, b), coord(series, c)) < 0.0
}

fn check_series(series: &TimeSeries) -> Result<(), GraphError> {
    if series.len() < 2 {
        return Err(GraphError::TooShort(series.len()));
    }
    // TimeSeries already enforces this; imported data may bypass it in future
    // constructors, so the builders keep their own guard.
    if let Some(i) = series.times().windows(2).position(|w| w[1] <= w[0]) {
        return Err(GraphError::NonIncreasingTime(i + 1));
    }
    Ok(())
}

/// Reference builder: every pair against every intermediate point.
pub fn build_vg_naive(series: &TimeSeries) -> Result<VisibilityGraph, GraphError> {
    check_series(series)?;
    let n = series.len();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if (a + 1..b).all(|c| below_chord(series, a, b, c)) {
                pairs.push((a, b));
            }
        }
    }
    Ok(VisibilityGraph::from_sorted_pairs(n, &pairs))
}

/// Divide-and-conquer builder, edge-for-edge identical to [`build_vg_naive`].
///
/// Each range is split at its leftmost maximum `m`. A point left of `m` and
/// one right of it never see each other, so only edges through `m` cross
/// the split. Sweeping away from `m`, a point is visible exactly when its
/// chord to `m` clears the steepest point seen so far, which then becomes
/// the new blocker. O(n log n) on typical series, O(n^2) on monotone ones.
pub fn build_vg_fast(series: &TimeSeries) -> Result<VisibilityGraph, GraphError> {
    check_series(series)?;
    let n = series.len();
    let y = series.values();
    let mut pairs = Vec::with_capacity(2 * n);
    // Explicit stack: monotone input would recurse n levels deep.
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let mut m = lo;
        for i in lo + 1..=hi {
            if y[i] > y[m] {
                m = i;
            }
        }
        if m < hi {
            let mut blocker = m + 1;
            pairs.push((m, blocker));
            for j in m + 2..=hi {
                if below_chord(series, m, j, blocker) {
                    pairs.push((m, j));
                    blocker = j;
                }
            }
        }
        if m > lo {
            let mut blocker = m - 1;
            pairs.push((blocker, m));
            for j in (lo..m - 1).rev() {
                if below_chord(series, j, m, blocker) {
                    pairs.push((j, m));
                    blocker = j;
                }
            }
        }
        if m > lo {
            stack.push((lo, m - 1));
        }
        if m < hi {
            stack.push((m + 1, hi));
        }
    }
    pairs.sort_unstable();
    Ok(VisibilityGraph::from_sorted_pairs(n, &pairs))
}

/// Which points of a clip become graph nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VgInput {
    /// Local maxima of the RMS envelope.
    #[default]
    Peaks,
    /// Every raw sample; only practical for short clips.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VgBuilder {
    #[default]
    Fast,
    Naive,
}

impl VgBuilder {
    pub fn build(self, series: &TimeSeries) -> Result<VisibilityGraph, GraphError> {
        match self {
            VgBuilder::Fast => build_vg_fast(series),
            VgBuilder::Naive => build_vg_naive(series),
        }
    }
}

/// The series a clip contributes to its graph.
pub fn graph_series(
    clip: &AudioClip,
    params: &PeakParams,
    input: VgInput,
) -> Result<TimeSeries, GraphError> {
    match input {
        VgInput::Raw => Ok(clip.to_series()),
        VgInput::Peaks => {
            let peaks = envelope_peaks(clip, params)?;
            if peaks.len() < 2 {
                return Err(GraphError::NoPeaks(peaks.len()));
            }
            Ok(peaks.series)
        }
    }
}

/// Envelope, peak detection and the fast builder in one step.
pub fn vg_from_audio(clip: &AudioClip, params: &PeakParams) -> Result<VisibilityGraph, GraphError> {
    let series = graph_series(clip, params, VgInput::Peaks)?;
    build_vg_fast(&series)
}
