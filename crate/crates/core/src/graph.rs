//! Graphs, datasets and the structural primitives everything else builds on.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hop distance marking an unreachable vertex pair.
pub const UNREACHABLE: usize = usize::MAX;

/// Undirected graph with dense, symmetric, non-negative edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    label: Option<usize>,
}

impl Graph {
    /// Validates and wraps an adjacency matrix.
    pub fn new(adjacency: DMatrix<f64>, label: Option<usize>) -> Result<Self> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(Error::NotSquare(rows, cols));
        }
        if rows == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        for i in 0..rows {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop on vertex {i}")));
            }
            for j in 0..rows {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "edge weight ({i},{j}) = {w} is not a finite non-negative number"
                    )));
                }
                if w != adjacency[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "asymmetric weights at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Graph { adjacency, label })
    }

    /// Unit-weight graph from an undirected edge list. Duplicate edges collapse.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::zeros(vertex_count, vertex_count);
        for &(u, v) in edges {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u},{v}) out of range for {vertex_count} vertices"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on vertex {u}")));
            }
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        Graph::new(a, None)
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    /// Number of unordered vertex pairs joined by a positive weight.
    pub fn edge_count(&self) -> usize {
        let n = self.vertex_count();
        (0..n)
            .map(|i| {
                ((i + 1)..n)
                    .filter(|&j| self.adjacency[(i, j)] > 0.0)
                    .count()
            })
            .sum()
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        // column scan: contiguous in column-major storage, equal to row u by symmetry
        let n = self.vertex_count();
        self.adjacency.as_slice()[u * n..(u + 1) * n]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(v, _)| v)
    }

    /// Relabels vertices so that old vertex `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.vertex_count();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(perm.len(), n));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(perm[i], perm[j])] = self.adjacency[(i, j)];
            }
        }
        Ok(Graph {
            adjacency: a,
            label: self.label,
        })
    }
}

/// Row sums of the adjacency matrix.
pub fn degree_vector(g: &Graph) -> DVector<f64> {
    let a = g.adjacency();
    DVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()))
}

/// `L = D - A`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    weighted_laplacian(g.adjacency())
}

/// `D - A` for an arbitrary symmetric weight matrix. Diagonal weights cancel
/// out of the Laplacian.
pub fn weighted_laplacian(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = -a.clone();
    for i in 0..a.nrows() {
        l[(i, i)] += a.row(i).sum();
    }
    l
}

/// Hop distances from `root` by breadth-first search; every positive-weight
/// edge counts as one hop.
pub fn bfs_distances(g: &Graph, root: usize) -> Vec<usize> {
    let n = g.vertex_count();
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for v in g.neighbors(u) {
            if dist[v] == UNREACHABLE {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs hop distances, [`UNREACHABLE`] for disconnected pairs.
pub fn shortest_path_distances(g: &Graph) -> Vec<Vec<usize>> {
    (0..g.vertex_count()).map(|u| bfs_distances(g, u)).collect()
}

/// Largest finite hop distance in the graph (0 for edgeless graphs).
pub fn max_shortest_path(g: &Graph) -> usize {
    shortest_path_distances(g)
        .into_iter()
        .flatten()
        .filter(|&d| d != UNREACHABLE)
        .max()
        .unwrap_or(0)
}

/// Vertices within `layer` hops of `root`, ascending.
pub fn expansion_vertices(g: &Graph, root: usize, layer: usize) -> Vec<usize> {
    bfs_distances(g, root)
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d <= layer)
        .map(|(v, _)| v)
        .collect()
}

/// Subgraph induced by the vertices within `layer` hops of `root`.
pub fn expansion_subgraph(g: &Graph, root: usize, layer: usize) -> Result<Graph> {
    if root >= g.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "root {root} out of range for {} vertices",
            g.vertex_count()
        )));
    }
    if layer == 0 {
        return Err(Error::InvalidArgument("layer must be at least 1".into()));
    }
    let keep = expansion_vertices(g, root, layer);
    Ok(induced_subgraph(g, &keep))
}

pub(crate) fn induced_subgraph(g: &Graph, keep: &[usize]) -> Graph {
    let a = g.adjacency();
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])]);
    Graph {
        adjacency: sub,
        label: None,
    }
}

/// Ordered collection of graphs sharing one class-label space.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    graphs: Vec<Graph>,
    class_count: usize,
    name: String,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, class_count: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("dataset has no graphs".into()));
        }
        if class_count == 0 {
            return Err(Error::InvalidArgument(
                "class_count must be positive".into(),
            ));
        }
        for (i, g) in graphs.iter().enumerate() {
            if let Some(l) = g.label() {
                if l >= class_count {
                    return Err(Error::InvalidArgument(format!(
                        "graph {i} has label {l} outside [0, {class_count})"
                    )));
                }
            }
        }
        Ok(GraphDataset {
            graphs,
            class_count,
            name: name.into(),
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn total_vertices(&self) -> usize {
        self.graphs.iter().map(Graph::vertex_count).sum()
    }

    /// Labels of all graphs; `None` if any graph is unlabeled.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.graphs.iter().map(Graph::label).collect()
    }

    /// Greatest finite shortest-path length over all graphs.
    pub fn max_shortest_path(&self) -> usize {
        self.graphs.iter().map(max_shortest_path).max().unwrap_or(0)
    }
}
