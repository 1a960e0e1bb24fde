//! Hierarchical prototype alignment.
//!
//! Vertices of every graph are clustered (per embedding dimension `k`) into a
//! shared set of prototypes, and the prototypes are re-clustered level by
//! level. Each graph is then mapped onto the prototypes through a one-hot
//! correspondence matrix `C`, giving fixed-size aligned matrices `Cᵀ A C`
//! and `Cᵀ ρ C`. Because every graph aligns to the same prototypes, the
//! induced vertex correspondence is transitive across the whole dataset.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ctqw::DensityMatrix;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::Graph;

/// Lloyd iteration cap.
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Traces at or below this are treated as zero when renormalizing.
pub const TRACE_FLOOR: f64 = 1e-12;

/// Cluster centers at one hierarchy level for one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub level: usize,
    pub centers: DMatrix<f64>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.centers.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sum of squared distances from each point to its nearest center.
pub fn kmeans_objective(points: &DMatrix<f64>, protos: &PrototypeSet) -> f64 {
    let centers = rows_of(&protos.centers);
    rows_of(points).iter().map(|p| nearest(p, &centers).1).sum()
}

/// Lloyd's k-means with farthest-point seeding.
///
/// Points are first collapsed into their sorted distinct values (with
/// multiplicities), so the result depends only on the point multiset. Seeding
/// starts at the lexicographically smallest point and repeatedly adds the
/// point farthest from the chosen centers. Final centers are returned in
/// lexicographic order. `clusters` is clamped to the number of distinct
/// points.
pub fn kmeans(points: &DMatrix<f64>, clusters: usize) -> Result<PrototypeSet> {
    if clusters == 0 {
        return Err(Error::InvalidArgument(
            "cluster count must be at least 1".into(),
        ));
    }
    if points.nrows() == 0 {
        return Err(Error::InvalidArgument("no points to cluster".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("points must be finite".into()));
    }

    let mut sorted = rows_of(points);
    sorted.sort_by(|a, b| lex_cmp(a, b));
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for p in sorted {
        match distinct.last() {
            Some(last) if lex_cmp(last, &p).is_eq() => *weight.last_mut().unwrap() += 1.0,
            _ => {
                distinct.push(p);
                weight.push(1.0);
            }
        }
    }

    let m = if clusters > distinct.len() {
        warn!(
            "k-means: {clusters} clusters requested but only {} distinct points; clamping",
            distinct.len()
        );
        distinct.len()
    } else {
        clusters
    };

    let mut centers = vec![distinct[0].clone()];
    let mut min_dist: Vec<f64> = distinct.iter().map(|p| sq_dist(p, &distinct[0])).collect();
    while centers.len() < m {
        let next = argmax(&min_dist);
        centers.push(distinct[next].clone());
        for (d, p) in min_dist.iter_mut().zip(&distinct) {
            *d = d.min(sq_dist(p, &distinct[next]));
        }
    }

    let dim = points.ncols();
    let mut assign: Vec<usize> = vec![usize::MAX; distinct.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut dist = vec![0.0; distinct.len()];
        for (i, p) in distinct.iter().enumerate() {
            let (j, d) = nearest(p, &centers);
            dist[i] = d;
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; m];
        let mut counts = vec![0.0; m];
        for (i, p) in distinct.iter().enumerate() {
            let j = assign[i];
            counts[j] += weight[i];
            for (s, x) in sums[j].iter_mut().zip(p) {
                *s += weight[i] * x;
            }
        }
        for j in 0..m {
            if counts[j] > 0.0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j]).collect();
            } else {
                // Re-seed with the point farthest from its own center.
                let far = argmax(&dist);
                centers[j] = distinct[far].clone();
                dist[far] = f64::NEG_INFINITY;
                assign[far] = j;
            }
        }
    }

    centers.sort_by(|a, b| lex_cmp(a, b));
    let flat: Vec<f64> = centers.into_iter().flatten().collect();
    Ok(PrototypeSet {
        level: 1,
        centers: DMatrix::from_row_slice(m, dim, &flat),
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cluster counts per level: `ceil(m1 / 2^(h-1))` for `h = 1..=levels`.
pub fn level_sizes(m1: usize, levels: usize) -> Vec<usize> {
    (0..levels)
        .map(|h| m1.div_ceil(1usize << h.min(63)).max(1))
        .collect()
}

/// Prototype sets for levels `1..=levels` on the first `dim` embedding
/// columns. Level `h` clusters the centers of level `h-1`.
pub fn hierarchical_prototypes(
    table: &EmbeddingTable,
    dim: usize,
    m1: usize,
    levels: usize,
) -> Result<Vec<PrototypeSet>> {
    if levels == 0 || m1 == 0 {
        return Err(Error::InvalidArgument(
            "levels and m1 must be at least 1".into(),
        ));
    }
    if dim == 0 || dim > table.max_layer() {
        return Err(Error::InvalidArgument(format!(
            "dimension {dim} outside 1..={}",
            table.max_layer()
        )));
    }
    let mut out: Vec<PrototypeSet> = Vec::with_capacity(levels);
    for (h, size) in level_sizes(m1, levels).into_iter().enumerate() {
        let mut set = match out.last() {
            None => kmeans(&table.prefix(dim), size)?,
            Some(prev) => kmeans(&prev.centers, size.min(prev.len()))?,
        };
        set.level = h + 1;
        out.push(set);
    }
    Ok(out)
}

/// One-hot vertex-to-prototype assignment, stored as the column index of
/// each row's single 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMatrix {
    assignment: Vec<usize>,
    columns: usize,
}

impl CorrespondenceMatrix {
    pub fn new(assignment: Vec<usize>, columns: usize) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&j| j >= columns) {
            return Err(Error::InvalidArgument(format!(
                "assignment to column {bad} of {columns}"
            )));
        }
        Ok(CorrespondenceMatrix {
            assignment,
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.assignment.len()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.rows(), self.columns);
        for (i, &j) in self.assignment.iter().enumerate() {
            c[(i, j)] = 1.0;
        }
        c
    }

    /// Same correspondence after relabeling the rows by `perm` (old row `v`
    /// becomes `perm[v]`).
    pub fn permuted(&self, perm: &[usize]) -> CorrespondenceMatrix {
        let mut assignment = vec![0; self.rows()];
        for (v, &j) in self.assignment.iter().enumerate() {
            assignment[perm[v]] = j;
        }
        CorrespondenceMatrix {
            assignment,
            columns: self.columns,
        }
    }
}

/// Nearest prototype under squared Euclidean distance, ties to the lowest
/// prototype index.
pub fn correspondence_matrix(
    graph_rows: &DMatrix<f64>,
    protos: &PrototypeSet,
) -> Result<CorrespondenceMatrix> {
    if graph_rows.ncols() != protos.dim() {
        return Err(Error::DimensionMismatch(graph_rows.ncols(), protos.dim()));
    }
    let centers = rows_of(&protos.centers);
    let assignment = rows_of(graph_rows)
        .iter()
        .map(|p| nearest(p, &centers).0)
        .collect();
    CorrespondenceMatrix::new(assignment, protos.len())
}

fn congruence(m: &DMatrix<f64>, c: &CorrespondenceMatrix) -> Result<DMatrix<f64>> {
    if m.nrows() != c.rows() {
        return Err(Error::DimensionMismatch(m.nrows(), c.rows()));
    }
    let a = c.assignment();
    let mut out = DMatrix::zeros(c.columns(), c.columns());
    for u in 0..m.nrows() {
        for v in 0..m.ncols() {
            let w = m[(u, v)];
            if w != 0.0 {
                out[(a[u], a[v])] += w;
            }
        }
    }
    Ok(out)
}

/// `Cᵀ A C`: total edge weight between the vertex groups of each prototype pair.
pub fn aligned_adjacency(g: &Graph, c: &CorrespondenceMatrix) -> Result<DMatrix<f64>> {
    congruence(g.adjacency(), c)
}

/// `Cᵀ ρ C` without renormalization.
pub fn aligned_density(rho: &DensityMatrix, c: &CorrespondenceMatrix) -> Result<DMatrix<f64>> {
    congruence(rho.entries(), c)
}

fn check_columns(cs: &[CorrespondenceMatrix]) -> Result<usize> {
    let first = cs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no correspondence matrices".into()))?;
    for c in cs {
        if c.columns() != first.columns() {
            return Err(Error::DimensionMismatch(first.columns(), c.columns()));
        }
    }
    Ok(first.columns())
}

fn mean_congruence(m: &DMatrix<f64>, cs: &[CorrespondenceMatrix]) -> Result<DMatrix<f64>> {
    let size = check_columns(cs)?;
    let mut acc = DMatrix::zeros(size, size);
    for c in cs {
        acc += congruence(m, c)?;
    }
    Ok(acc / cs.len() as f64)
}

/// Mean over embedding dimensions of the aligned adjacency matrices.
pub fn hierarchical_aligned_adjacency(
    g: &Graph,
    cs: &[CorrespondenceMatrix],
) -> Result<DMatrix<f64>> {
    mean_congruence(g.adjacency(), cs)
}

/// Mean over embedding dimensions of the aligned densities, rescaled to unit
/// trace. A (pathological) zero-trace mean is returned as the zero matrix.
pub fn hierarchical_aligned_density(
    rho: &DensityMatrix,
    cs: &[CorrespondenceMatrix],
) -> Result<DensityMatrix> {
    let mut mean = mean_congruence(rho.entries(), cs)?;
    let trace = mean.trace();
    if trace > TRACE_FLOOR {
        mean /= trace;
    } else {
        mean.fill(0.0);
    }
    Ok(DensityMatrix::from_raw(mean))
}

/// Settings an alignment was fitted with; structures are only comparable
/// when their keys match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentKey {
    pub levels: usize,
    pub m1: usize,
    pub max_layer: usize,
    pub seed: u64,
}

impl AlignmentKey {
    /// Names of the fields that differ from `other`.
    pub fn differences(&self, other: &AlignmentKey) -> Vec<String> {
        let mut out = Vec::new();
        if self.levels != other.levels {
            out.push(format!("H ({} vs {})", self.levels, other.levels));
        }
        if self.m1 != other.m1 {
            out.push(format!("M1 ({} vs {})", self.m1, other.m1));
        }
        if self.max_layer != other.max_layer {
            out.push(format!("K ({} vs {})", self.max_layer, other.max_layer));
        }
        if self.seed != other.seed {
            out.push(format!("seed ({} vs {})", self.seed, other.seed));
        }
        out
    }
}

/// Aligned structures of one graph, one entry per hierarchy level.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedStructures {
    pub key: AlignmentKey,
    pub levels: Vec<AlignedLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedLevel {
    pub adjacency: DMatrix<f64>,
    pub density: DensityMatrix,
}

/// Prototype sets for every `(k, h)`, fitted on the whole dataset.
#[derive(Debug, Clone)]
pub struct HierarchicalAlignment {
    /// `sets[k-1][h-1]`.
    sets: Vec<Vec<PrototypeSet>>,
    m1: usize,
    seed: u64,
}

impl HierarchicalAlignment {
    /// Fits `max_layer × levels` prototype sets; dimensions run as
    /// independent jobs. The seeding is deterministic, so `seed` is only
    /// recorded for provenance.
    pub fn fit(
        table: &EmbeddingTable,
        m1: usize,
        levels: usize,
        seed: u64,
        exec: Exec,
    ) -> Result<HierarchicalAlignment> {
        let sets = exec
            .map_range(table.max_layer(), |k| {
                hierarchical_prototypes(table, k + 1, m1, levels)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(HierarchicalAlignment { sets, m1, seed })
    }

    pub fn key(&self) -> AlignmentKey {
        AlignmentKey {
            levels: self.levels(),
            m1: self.m1,
            max_layer: self.max_layer(),
            seed: self.seed,
        }
    }

    pub fn levels(&self) -> usize {
        self.sets[0].len()
    }

    pub fn max_layer(&self) -> usize {
        self.sets.len()
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn prototypes(&self, dim: usize, level: usize) -> &PrototypeSet {
        &self.sets[dim - 1][level - 1]
    }

    /// Width of the aligned matrices at `level`: the largest prototype count
    /// over the embedding dimensions.
    pub fn level_width(&self, level: usize) -> usize {
        self.sets
            .iter()
            .map(|s| s[level - 1].len())
            .max()
            .unwrap_or(0)
    }

    /// Per-level realised prototype counts (max over dimensions).
    pub fn realised_sizes(&self) -> Vec<usize> {
        (1..=self.levels()).map(|h| self.level_width(h)).collect()
    }

    /// Correspondences of graph `p`, indexed `[h-1][k-1]`, all padded to the
    /// level width.
    pub fn correspondences(
        &self,
        table: &EmbeddingTable,
        p: usize,
    ) -> Result<Vec<Vec<CorrespondenceMatrix>>> {
        (1..=self.levels())
            .map(|h| {
                let width = self.level_width(h);
                (1..=self.max_layer())
                    .map(|k| {
                        let c =
                            correspondence_matrix(&table.graph_rows(p, k), self.prototypes(k, h))?;
                        CorrespondenceMatrix::new(c.assignment, width)
                    })
                    .collect()
            })
            .collect()
    }

    /// Aligned adjacency and density families of one graph.
    pub fn aligned_structures(
        &self,
        g: &Graph,
        rho: &DensityMatrix,
        correspondences: &[Vec<CorrespondenceMatrix>],
    ) -> Result<AlignedStructures> {
        let levels = correspondences
            .iter()
            .map(|cs| {
                Ok(AlignedLevel {
                    adjacency: hierarchical_aligned_adjacency(g, cs)?,
                    density: hierarchical_aligned_density(rho, cs)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AlignedStructures {
            key: self.key(),
            levels,
        })
    }

    /// Writes one plain-text matrix per `(h, k)` prototype set plus
    /// `manifest.json`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, per_level) in self.sets.iter().enumerate() {
            for (h, set) in per_level.iter().enumerate() {
                let path = dir.join(format!("prototypes_h{}_k{}.txt", h + 1, k + 1));
                let mut text = String::new();
                for row in set.centers.row_iter() {
                    let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
                    text.push_str(&cells.join(" "));
                    text.push('\n');
                }
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }
        let manifest = BundleManifest {
            m1: self.m1,
            levels: self.levels(),
            max_layer: self.max_layer(),
            seed: self.seed,
            level_sizes: self.realised_sizes(),
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

/// Manifest of an alignment bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub m1: usize,
    pub levels: usize,
    pub max_layer: usize,
    pub seed: u64,
    pub level_sizes: Vec<usize>,
}

/// Exhaustively checks that "shares a prototype" is transitive over all
/// rows of the given correspondence matrices (concatenated in order).
pub fn shared_prototype_relation_is_transitive(cs: &[&CorrespondenceMatrix]) -> bool {
    let dense: Vec<DMatrix<f64>> = cs.iter().map(|c| c.to_dense()).collect();
    let rows: Vec<Vec<bool>> = dense
        .iter()
        .flat_map(|d| {
            d.row_iter()
                .map(|r| r.iter().map(|&x| x == 1.0).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        })
        .collect();
    let n = rows.len();
    let related: Vec<Vec<bool>> = (0..n)
        .map(|u| {
            (0..n)
                .map(|v| rows[u].iter().zip(&rows[v]).any(|(&a, &b)| a && b))
                .collect()
        })
        .collect();
    for u in 0..n {
        for v in 0..n {
            if !related[u][v] {
                continue;
            }
            for w in 0..n {
                if related[v][w] && !related[u][w] {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctqw::density_matrix_infinite;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    /// Optimal 2-partition of 1-D points by enumerating every split.
    fn brute_two_means(points: &[f64]) -> (f64, Vec<f64>) {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
                .map(|i| (mask >> i & 1 == 1, points[i]))
                .fold((vec![], vec![]), |(mut a, mut b), (left, x)| {
                    if left {
                        a.push(x)
                    } else {
                        b.push(x)
                    }
                    (a, b)
                });
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (ma, mb) = (mean(&a), mean(&b));
            let cost: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            if cost < best.0 {
                let mut c = vec![ma, mb];
                c.sort_by(f64::total_cmp);
                best = (cost, c);
            }
        }
        best
    }

    #[test]
    fn kmeans_examples() {
        let same = col(&[3.0; 5]);
        let p = kmeans(&same, 1).unwrap();
        assert_eq!(p.centers[(0, 0)], 3.0);
        assert_eq!(kmeans_objective(&same, &p), 0.0);

        let pts = col(&[4.0, 1.0, 7.0, 2.0]);
        let p = kmeans(&pts, 4).unwrap();
        assert_eq!(p.centers.as_slice(), &[1.0, 2.0, 4.0, 7.0]);
        assert_eq!(kmeans_objective(&pts, &p), 0.0);

        let data = [0.0, 1.0, 10.0, 11.0];
        let (cost, centers) = brute_two_means(&data);
        let p = kmeans(&col(&data), 2).unwrap();
        assert_eq!(p.centers.as_slice(), &centers[..]);
        assert_eq!(p.centers.as_slice(), &[0.5, 10.5]);
        assert!((kmeans_objective(&col(&data), &p) - cost).abs() < 1e-12);

        // clamped to the 2 distinct points
        assert_eq!(kmeans(&col(&[1.0, 1.0, 2.0]), 5).unwrap().len(), 2);
        assert!(kmeans(&col(&[1.0]), 0).is_err());
    }

    #[test]
    fn level_schedule() {
        assert_eq!(level_sizes(256, 5), vec![256, 128, 64, 32, 16]);
        assert_eq!(level_sizes(5, 4), vec![5, 3, 2, 1]);
        assert_eq!(level_sizes(1, 3), vec![1, 1, 1]);
    }

    #[test]
    fn correspondences() {
        let protos = PrototypeSet {
            level: 1,
            centers: col(&[1.0, 9.0]),
        };
        let c = correspondence_matrix(&col(&[0.0, 10.0]), &protos).unwrap();
        assert_eq!(c.assignment(), &[0, 1]);

        let pts = col(&[5.0, 2.0, 8.0]);
        let own = PrototypeSet {
            level: 1,
            centers: pts.clone(),
        };
        let c = correspondence_matrix(&pts, &own).unwrap();
        assert_eq!(c.to_dense(), DMatrix::identity(3, 3));

        let one = PrototypeSet {
            level: 1,
            centers: col(&[0.0]),
        };
        let c = correspondence_matrix(&pts, &one).unwrap();
        assert_eq!(c.to_dense(), DMatrix::from_element(3, 1, 1.0));

        // equidistant: lowest index wins
        let tie = PrototypeSet {
            level: 1,
            centers: col(&[0.0, 2.0]),
        };
        assert_eq!(
            correspondence_matrix(&col(&[1.0]), &tie)
                .unwrap()
                .assignment(),
            &[0]
        );
    }

    #[test]
    fn aligned_matrices() {
        let k2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p3 = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();

        let id = CorrespondenceMatrix::new(vec![0, 1, 2], 3).unwrap();
        assert_eq!(aligned_adjacency(&p3, &id).unwrap(), *p3.adjacency());

        let all = CorrespondenceMatrix::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(aligned_adjacency(&p3, &all).unwrap()[(0, 0)], 4.0);

        let both = CorrespondenceMatrix::new(vec![0, 0], 2).unwrap();
        let dense = both.to_dense();
        let by_hand = dense.transpose() * k2.adjacency() * &dense;
        let got = aligned_adjacency(&k2, &both).unwrap();
        assert_eq!(got, by_hand);
        assert_eq!(got, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));

        let rho = density_matrix_infinite(&k2).unwrap();
        let raw = aligned_density(&rho, &both).unwrap();
        assert!((raw - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).amax() < 1e-12);
        let norm = hierarchical_aligned_density(&rho, std::slice::from_ref(&both)).unwrap();
        assert!(
            (norm.entries() - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-12
        );

        let rid = CorrespondenceMatrix::new(vec![0, 1], 2).unwrap();
        assert_eq!(aligned_density(&rho, &rid).unwrap(), *rho.entries());
        let same = hierarchical_aligned_density(&rho, std::slice::from_ref(&rid)).unwrap();
        assert!((same.entries() - rho.entries()).amax() < 1e-15);

        let split = CorrespondenceMatrix::new(vec![1, 0], 2).unwrap();
        let mean = hierarchical_aligned_adjacency(&k2, &[both.clone(), split.clone()]).unwrap();
        let expect = (aligned_adjacency(&k2, &both).unwrap()
            + aligned_adjacency(&k2, &split).unwrap())
            / 2.0;
        assert_eq!(mean, expect);
        let twice = hierarchical_aligned_adjacency(&k2, &[split.clone(), split.clone()]).unwrap();
        assert_eq!(twice, aligned_adjacency(&k2, &split).unwrap());

        let twice = hierarchical_aligned_density(&rho, &[both.clone(), both.clone()]).unwrap();
        assert_eq!(twice, norm);

        assert!(aligned_adjacency(&p3, &both).is_err());
        let narrow = CorrespondenceMatrix::new(vec![0, 0], 1).unwrap();
        assert!(hierarchical_aligned_adjacency(&k2, &[both, narrow]).is_err());
    }

    #[test]
    fn zero_trace_density_becomes_zero() {
        let zero = DensityMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let c = CorrespondenceMatrix::new(vec![0, 1], 3).unwrap();
        let out = hierarchical_aligned_density(&zero, &[c]).unwrap();
        assert_eq!(out.entries(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn transitivity_detects_violations() {
        let a = CorrespondenceMatrix::new(vec![0, 1, 1], 3).unwrap();
        let b = CorrespondenceMatrix::new(vec![2, 1], 3).unwrap();
        assert!(shared_prototype_relation_is_transitive(&[&a, &b]));
    }

    fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> DMatrix<f64> {
        // a coarse grid so duplicates occur
        DMatrix::from_fn(n, dim, |_, _| rng.random_range(0..6) as f64 * 0.5)
    }

    proptest! {
        #[test]
        fn kmeans_is_multiset_invariant(seed in any::<u64>(), n in 1usize..40, m in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, n, 3);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let shuffled = DMatrix::from_fn(n, 3, |i, j| pts[(order[i], j)]);
            let a = kmeans(&pts, m).unwrap();
            let b = kmeans(&shuffled, m).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn aligned_adjacency_mass_and_permutation(seed in any::<u64>(), n in 1usize..12, m in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let edges: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .filter(|_| rng.random_bool(0.4)).collect();
            let g = Graph::from_edges(n, &edges).unwrap();
            let c = CorrespondenceMatrix::new((0..n).map(|_| rng.random_range(0..m)).collect(), m).unwrap();
            let aligned = aligned_adjacency(&g, &c).unwrap();
            prop_assert_eq!(aligned.sum(), g.adjacency().sum());
            prop_assert_eq!(&aligned, &aligned.transpose());
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let moved = aligned_adjacency(&g.permuted(&perm).unwrap(), &c.permuted(&perm)).unwrap();
            prop_assert_eq!(moved, aligned);
        }
    }
}
