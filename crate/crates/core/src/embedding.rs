//! Depth-based vertex representations.
//!
//! Entry `k-1` of a vertex's vector is the Shannon entropy (nats) of the
//! steady-state random-walk distribution `p(u) = d_S(u) / Σ d_S` on the
//! `k`-layer expansion subgraph `S` rooted at the vertex.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{bfs_distances, Graph, GraphDataset, UNREACHABLE};

/// Cap applied to the automatic layer count.
pub const MAX_AUTO_LAYER: usize = 10;

/// Shannon entropy of a degree multiset. Degrees are sorted first so the
/// value depends only on the multiset, not on vertex order.
fn degree_entropy(mut degrees: Vec<f64>) -> f64 {
    degrees.sort_by(f64::total_cmp);
    let total: f64 = degrees.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = degrees
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| {
            let p = d / total;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Entropy of the `layer`-expansion subgraph around `root`.
pub fn subgraph_entropy(g: &Graph, root: usize, layer: usize) -> Result<f64> {
    Ok(db_representation(g, root, layer)?.values[layer - 1])
}

/// One vertex's depth-based vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexEmbedding {
    pub values: Vec<f64>,
    pub graph: usize,
    pub vertex: usize,
}

/// Entropies of the expansion subgraphs at layers `1..=max_layer`.
pub fn db_representation(g: &Graph, root: usize, max_layer: usize) -> Result<VertexEmbedding> {
    if root >= g.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "root {root} out of range for {} vertices",
            g.vertex_count()
        )));
    }
    if max_layer == 0 {
        return Err(Error::InvalidArgument(
            "max_layer must be at least 1".into(),
        ));
    }
    Ok(VertexEmbedding {
        values: layer_entropies(g, root, max_layer),
        graph: 0,
        vertex: root,
    })
}

fn layer_entropies(g: &Graph, root: usize, max_layer: usize) -> Vec<f64> {
    let n = g.vertex_count();
    let a = g.adjacency();
    let dist = bfs_distances(g, root);
    // degree[u][k-1] = weighted degree of u inside the k-layer subgraph; an
    // edge (u,v) is present from layer max(dist u, dist v) on.
    let members: Vec<usize> = (0..n).filter(|&u| dist[u] != UNREACHABLE).collect();
    let mut degree = vec![vec![0.0; max_layer]; n];
    for &u in &members {
        // neighbors of a reachable vertex are reachable
        for v in g.neighbors(u) {
            let w = a[(v, u)];
            let from = dist[u].max(dist[v]).max(1);
            for d in degree[u].iter_mut().skip(from - 1) {
                *d += w;
            }
        }
    }
    (1..=max_layer)
        .map(|k| {
            let degs: Vec<f64> = members
                .iter()
                .filter(|&&u| dist[u] <= k)
                .map(|&u| degree[u][k - 1])
                .collect();
            degree_entropy(degs)
        })
        .collect()
}

/// Depth-based vectors for every vertex of a dataset, rows ordered by
/// (graph index, vertex index).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    values: DMatrix<f64>,
    owners: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl EmbeddingTable {
    pub fn max_layer(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn graph_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Full `N × K` value matrix.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn owner(&self, row: usize) -> (usize, usize) {
        self.owners[row]
    }

    pub fn row(&self, row: usize) -> VertexEmbedding {
        let (graph, vertex) = self.owners[row];
        VertexEmbedding {
            values: self.values.row(row).iter().copied().collect(),
            graph,
            vertex,
        }
    }

    /// Range of table rows belonging to graph `p`.
    pub fn graph_range(&self, p: usize) -> std::ops::Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    /// First `dim` columns of the rows of graph `p`.
    pub fn graph_rows(&self, p: usize, dim: usize) -> DMatrix<f64> {
        let r = self.graph_range(p);
        self.values.view((r.start, 0), (r.len(), dim)).clone_owned()
    }

    /// First `dim` columns of every row.
    pub fn prefix(&self, dim: usize) -> DMatrix<f64> {
        self.values.columns(0, dim).clone_owned()
    }

    /// Column-wise z-scored copy (columns with zero spread are only centered).
    pub fn standardized(&self) -> EmbeddingTable {
        let mut values = self.values.clone();
        let n = values.nrows() as f64;
        for mut col in values.column_iter_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for x in col.iter_mut() {
                *x -= mean;
                if sd > 0.0 {
                    *x /= sd;
                }
            }
        }
        EmbeddingTable {
            values,
            owners: self.owners.clone(),
            offsets: self.offsets.clone(),
        }
    }

    /// Tab-separated dump: graph index, vertex index, then the `K` values with
    /// 12 significant digits.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (row, &(g, v)) in self.owners.iter().enumerate() {
            write!(out, "{g}\t{v}")?;
            for x in self.values.row(row).iter() {
                write!(out, "\t{x:.11e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `min(greatest shortest-path length, 10)`, at least 1.
pub fn default_max_layer(ds: &GraphDataset) -> usize {
    ds.max_shortest_path().clamp(1, MAX_AUTO_LAYER)
}

pub fn dataset_embeddings(
    ds: &GraphDataset,
    max_layer: usize,
    exec: Exec,
) -> Result<EmbeddingTable> {
    if max_layer == 0 {
        return Err(Error::InvalidArgument(
            "max_layer must be at least 1".into(),
        ));
    }
    let per_graph: Vec<Vec<Vec<f64>>> = exec.map_slice(ds.graphs(), |g| {
        (0..g.vertex_count())
            .map(|v| layer_entropies(g, v, max_layer))
            .collect()
    });
    let total: usize = per_graph.iter().map(Vec::len).sum();
    let mut values = DMatrix::zeros(total, max_layer);
    let mut owners = Vec::with_capacity(total);
    let mut offsets = vec![0];
    let mut row = 0;
    for (p, rows) in per_graph.into_iter().enumerate() {
        for (v, entropies) in rows.into_iter().enumerate() {
            for (k, x) in entropies.into_iter().enumerate() {
                values[(row, k)] = x;
            }
            owners.push((p, v));
            row += 1;
        }
        offsets.push(row);
    }
    Ok(EmbeddingTable {
        values,
        owners,
        offsets,
    })
}
