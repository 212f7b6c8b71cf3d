//! Undirected communication graphs and hop-distance neighborhoods.
//!
//! Agents are vertices `0..n` of a simple undirected graph. Everything
//! "local" in the rest of the crate is phrased through the κ-hop
//! neighborhood
//!
//! ```text
//! N_i^κ = { j : dist(i, j) ≤ κ },      N_i = N_i^1,
//! ```
//!
//! where `dist` is the unweighted shortest-path metric. `N_i^0 = {i}` and
//! unreachable pairs have infinite distance (reported as `None`).
//!
//! Graphs are tiny (tens of vertices), so all-pairs distances are
//! precomputed by BFS at construction and every query is a table lookup.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when constructing a [`Graph`].
#[derive(Debug, Error)]
pub enum GraphError {
    /// An edge endpoint is not a valid vertex index.
    #[error("edge ({0}, {1}) has an endpoint outside 0..{2}")]
    EndpointOutOfRange(usize, usize, usize),
    /// Self-loops are not allowed in a simple graph.
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    /// The same undirected edge was listed twice.
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
}

/// Serialized form of a [`Graph`]: vertex count plus an undirected edge list.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphSpec {
    n: usize,
    edges: Vec<(usize, usize)>,
}

/// A simple undirected graph with precomputed all-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    /// `dist[i][j]`: shortest-path hop count, `usize::MAX` if unreachable.
    dist: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph on `n` vertices from an undirected edge list.
    ///
    /// # Arguments
    ///
    /// * `n` — number of vertices (agents), indexed `0..n`.
    /// * `edges` — undirected edges `(u, v)`; orientation is ignored.
    ///
    /// # Errors
    ///
    /// Rejects endpoints outside `0..n`, self-loops, and duplicate edges
    /// (in either orientation).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adj = vec![Vec::new(); n];
        let mut canonical: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::EndpointOutOfRange(u, v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            let key = (u.min(v), u.max(v));
            if canonical.contains(&key) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            canonical.push(key);
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        canonical.sort_unstable();
        let dist = (0..n).map(|src| bfs(&adj, src)).collect();
        Ok(Self { n, edges: canonical, adj, dist })
    }

    /// Builds the path graph `0 – 1 – … – (n−1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        Self::from_edges(n, &edges).expect("path edges are always valid")
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The canonical (sorted, deduplicated) undirected edge list.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted adjacency list of vertex `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Hop distance between `i` and `j`.
    ///
    /// # Returns
    ///
    /// `Some(d)` for reachable pairs (`d = 0` iff `i == j`), `None` when no
    /// path exists.
    pub fn dist(&self, i: usize, j: usize) -> Option<usize> {
        let d = self.dist[i][j];
        (d != usize::MAX).then_some(d)
    }

    /// The κ-hop neighborhood `N_i^κ`, sorted ascending. Always contains `i`.
    pub fn khop(&self, i: usize, kappa: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.dist[i][j] <= kappa).collect()
    }

    /// The complement `N_{−i}^κ = {0..n} \ N_i^κ`, sorted ascending.
    pub fn khop_complement(&self, i: usize, kappa: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.dist[i][j] > kappa).collect()
    }

    /// Largest κ-hop neighborhood size, `n(κ) = max_i |N_i^κ|`.
    ///
    /// This is the count entering the theoretical step sizes of independent
    /// policy gradient on a κ-local potential game.
    pub fn n_of_kappa(&self, kappa: usize) -> usize {
        (0..self.n).map(|i| self.khop(i, kappa).len()).max().unwrap_or(0)
    }

    /// Largest finite hop distance between any pair of vertices.
    pub fn diameter(&self) -> usize {
        let mut best = 0;
        for row in &self.dist {
            for &d in row {
                if d != usize::MAX {
                    best = best.max(d);
                }
            }
        }
        best
    }
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphSpec { n: self.n, edges: self.edges.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let spec = GraphSpec::deserialize(deserializer)?;
        Graph::from_edges(spec.n, &spec.edges).map_err(serde::de::Error::custom)
    }
}

/// Single-source BFS; returns hop distances with `usize::MAX` for
/// unreachable vertices.
fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
