//! Graph geodesics: Dijkstra over mesh edges or a symmetrized k-NN graph,
//! with Euclidean edge lengths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{dist_sq, Mesh, PointCloud, Point3};
use crate::error::{Error, Result};

/// Undirected weighted graph stored as adjacency lists.
#[derive(Clone, Debug)]
pub struct EdgeGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EdgeGraph {
    /// Empty graph on `n` vertices.
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Adds the undirected edge `{a, b}` unless it already exists.
    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) {
        if a == b || self.adjacency[a].iter().any(|&(v, _)| v == b) {
            return;
        }
        self.adjacency[a].push((b, weight));
        self.adjacency[b].push((a, weight));
    }

    pub fn from_mesh(mesh: &Mesh) -> Self {
        let p = mesh.positions();
        let mut g = Self::new(p.len());
        for f in mesh.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                g.add_edge(a, b, dist_sq(p[a], p[b]).sqrt());
            }
        }
        g.sort_neighbours();
        g
    }

    /// Each point is joined to its `k` nearest neighbours; the union of the
    /// directed neighbour relations is kept.
    pub fn knn(points: &[Point3], k: usize) -> Self {
        let n = points.len();
        let mut g = Self::new(n);
        for i in 0..n {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist_sq(points[i], points[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(d, j) in others.iter().take(k) {
                g.add_edge(i, j, d.sqrt());
            }
        }
        g.sort_neighbours();
        g
    }

    fn sort_neighbours(&mut self) {
        for list in &mut self.adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbours(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn component_count(&self) -> usize {
        let n = self.adjacency.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Single-source shortest path lengths.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let n = self.adjacency.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier { dist: 0.0, vertex: source });
        while let Some(Frontier { dist: d, vertex: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Frontier { dist: nd, vertex: v });
                }
            }
        }
        dist
    }

    /// Rows of shortest-path distances, one per source. Fails on a
    /// disconnected graph.
    pub fn distances_from(&self, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
        let n = self.vertex_count();
        if let Some(&s) = sources.iter().find(|&&s| s >= n) {
            return Err(Error::IndexOutOfRange {
                index: s,
                size: n,
                context: "geodesic source".into(),
            });
        }
        let components = self.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(sources.par_iter().map(|&s| self.dijkstra(s)).collect())
    }
}

#[derive(Clone, Copy, Debug)]
struct Frontier {
    dist: f64,
    vertex: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Reversed so the max-heap pops the smallest distance first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// `|sources| × n` matrix of shortest-path distances along mesh edges.
pub fn geodesic_distances(mesh: &Mesh, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    EdgeGraph::from_mesh(mesh).distances_from(sources)
}

/// Shortest-path distances over the symmetrized `k`-nearest-neighbour graph.
pub fn knn_graph_geodesics(cloud: &PointCloud, k: usize, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-NN graph needs k >= 1".into()));
    }
    EdgeGraph::knn(cloud.positions(), k).distances_from(sources)
}
