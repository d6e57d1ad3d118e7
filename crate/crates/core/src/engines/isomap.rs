//! Isomap: kNN graph, graph geodesics, classical MDS.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};

use super::{squared_distances, symmetric_top2, Embedding2D, EngineKind, HyperValue};
use crate::error::{Error, Result};

/// Undirected weighted graph as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn empty(vertices: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); vertices],
        }
    }

    /// Builds a graph from undirected edges. Repeated edges keep the smaller
    /// weight; self loops are ignored.
    pub fn from_edges(vertices: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = Self::empty(vertices);
        for &(a, b, w) in edges {
            g.add_edge(a, b, w);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) {
        if a == b {
            return;
        }
        for (from, to) in [(a, b), (b, a)] {
            let list = &mut self.adjacency[from];
            match list.binary_search_by(|(v, _)| v.cmp(&to)) {
                Ok(pos) => list[pos].1 = list[pos].1.min(weight),
                Err(pos) => list.insert(pos, (to, weight)),
            }
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search_by(|(v, _)| v.cmp(&b)).is_ok()
    }

    /// Edges as `(a, b, weight)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|(b, _)| *b > a).map(|&(b, w)| (a, b, w)));
        }
        out
    }

    /// Connected-component label per vertex, numbered in order of first vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.vertex_count();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.adjacency[v] {
                    if label[u] == usize::MAX {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().max().map_or(0, |m| m + 1)
    }
}

/// Connects every point to its `k` nearest Euclidean neighbors (ties broken
/// by index) and symmetrizes by union.
pub fn knn_graph(data: ArrayView2<f64>, k: usize) -> Result<NeighborGraph> {
    let n = data.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidHyperparameter(format!(
            "k = {k} must be in [1, {}]",
            n.saturating_sub(1)
        )));
    }
    let sq = squared_distances(data);
    let mut g = NeighborGraph::empty(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = sq.row(i);
        order.select_nth_unstable_by(k - 1, |&a, &b| {
            row[a].total_cmp(&row[b]).then(a.cmp(&b))
        });
        for &j in &order[..k] {
            g.add_edge(i, j, sq[[i, j]].sqrt());
        }
    }
    Ok(g)
}

/// Minimum spanning tree of the complete Euclidean graph (Prim, `O(N^2)`),
/// as `(a, b, weight)` edges.
fn euclidean_mst(data: ArrayView2<f64>) -> Vec<(usize, usize, f64)> {
    let n = data.nrows();
    let sq = squared_distances(data);
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return edges;
    }
    best[0] = 0.0;
    for _ in 0..n {
        let mut v = usize::MAX;
        for u in 0..n {
            if !in_tree[u] && (v == usize::MAX || best[u] < best[v]) {
                v = u;
            }
        }
        in_tree[v] = true;
        if parent[v] != usize::MAX {
            edges.push((parent[v], v, best[v].sqrt()));
        }
        for u in 0..n {
            if !in_tree[u] && sq[[v, u]] < best[u] {
                best[u] = sq[[v, u]];
                parent[u] = v;
            }
        }
    }
    edges
}

/// Adds the Euclidean MST edges that join different components of `graph`,
/// making it connected. Returns the number of edges added.
pub fn bridge_components(graph: &mut NeighborGraph, data: ArrayView2<f64>) -> usize {
    let labels = graph.components();
    if labels.iter().all(|&c| c == 0) {
        return 0;
    }
    let mut added = 0;
    for (a, b, w) in euclidean_mst(data) {
        if labels[a] != labels[b] && !graph.has_edge(a, b) {
            graph.add_edge(a, b, w);
            added += 1;
        }
    }
    added
}

#[derive(PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn dijkstra(graph: &NeighborGraph, source: usize, dist: &mut [f64]) {
    dist.fill(f64::INFINITY);
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((Dist(0.0), source)));
    while let Some(Reverse((Dist(d), v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, w) in graph.neighbors(v) {
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((Dist(nd), u)));
            }
        }
    }
}

/// All-pairs shortest path lengths (Dijkstra from every vertex). Unreachable
/// pairs are `f64::INFINITY`. Entry `(i, j)` and `(j, i)` both come from the
/// search rooted at `min(i, j)`, so the result is exactly symmetric.
pub fn geodesic_distances(graph: &NeighborGraph) -> Array2<f64> {
    let n = graph.vertex_count();
    let mut out = Array2::zeros((n, n));
    let mut dist = vec![0.0; n];
    for i in 0..n {
        dijkstra(graph, i, &mut dist);
        for j in i..n {
            out[[i, j]] = dist[j];
            out[[j, i]] = dist[j];
        }
    }
    out
}

/// Classical (Torgerson) MDS into 2-D. The squared distances are double
/// centered and the top two eigenvectors are scaled by the root of their
/// eigenvalues. Non-positive or negligible eigenvalues give a zero axis and
/// set `degenerate`.
pub fn classical_mds(distances: ArrayView2<f64>) -> Result<Embedding2D> {
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "distance matrix columns",
            expected: n,
            actual: distances.ncols(),
        });
    }
    for i in 0..n {
        for j in 0..n {
            let d = distances[[i, j]];
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    context: "distance matrix",
                    row: i,
                    column: j,
                });
            }
            if i == j && d != 0.0 {
                return Err(Error::InvalidData(format!("distance diagonal ({i}, {i}) is {d}")));
            }
            if d != distances[[j, i]] {
                return Err(Error::InvalidData(format!(
                    "distance matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut b = distances.mapv(|d| -0.5 * d * d);
    let row_means: Vec<f64> = b.rows().into_iter().map(|r| r.sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] += grand - row_means[i] - row_means[j];
        }
    }
    // Restore exact symmetry lost to rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (b[[i, j]] + b[[j, i]]);
            b[[i, j]] = m;
            b[[j, i]] = m;
        }
    }

    let eig = symmetric_top2(b.view());
    let cutoff = 1e-10 * eig.values[0].abs().max(f64::MIN_POSITIVE);
    let mut coords = Array2::zeros((n, 2));
    let mut informative = 0;
    for axis in 0..2 {
        let lambda = eig.values[axis];
        if lambda > cutoff {
            informative += 1;
            let s = lambda.sqrt();
            for i in 0..n {
                coords[[i, axis]] = eig.vectors[[i, axis]] * s;
            }
        }
    }
    let degenerate = informative < 2;
    if degenerate {
        log::warn!("classical MDS found {informative} informative axes, zero-filling the rest");
    }
    let kept: f64 = eig.values.iter().filter(|&&v| v > cutoff).sum();
    let objective = if eig.trace > 0.0 {
        (1.0 - kept / eig.trace).max(0.0)
    } else {
        0.0
    };
    Ok(Embedding2D {
        coords,
        engine: EngineKind::Isomap,
        h: HyperValue(Vec::new()),
        seed: 0,
        objective,
        degenerate,
    })
}

/// kNN graph, bridged if disconnected, then geodesic classical MDS.
/// `objective` is the share of double-centered spectrum not captured by the
/// two retained axes.
pub fn isomap_project(data: ArrayView2<f64>, k: usize) -> Result<Embedding2D> {
    let mut graph = knn_graph(data, k)?;
    let bridged = bridge_components(&mut graph, data);
    if bridged > 0 {
        log::info!("isomap k={k}: bridged disconnected neighbor graph with {bridged} MST edges");
    }
    let geo = geodesic_distances(&graph);
    let mut emb = classical_mds(geo.view())?;
    emb.h = HyperValue::scalar(k as f64);
    Ok(emb)
}
