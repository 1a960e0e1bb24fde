//! Graph kernels built on the quantum Jensen-Shannon divergence.
//!
//! * `HAQJSK-A`: per hierarchy level, the CTQW density of each graph's
//!   aligned adjacency matrix; kernel `Σ_h exp(-QJSD(θ̄_p^h, θ̄_q^h))`.
//! * `HAQJSK-D`: per level, the aligned CTQW density of the original graph;
//!   kernel `Σ_h exp(-QJSD(ρ̄_p^h, ρ̄_q^h))`.
//! * `QJSU`: the unaligned baseline `exp(-μ QJSD(ρ_p, ρ_q))` with the smaller
//!   density zero-padded. It is not permutation invariant.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedStructures, CorrespondenceMatrix, HierarchicalAlignment};
use crate::ctqw::{
    density_matrix_from_adjacency, density_matrix_infinite, divergence_from_entropies, qjsd,
    spectrum_entropy, DensityMatrix,
};
use crate::embedding::{dataset_embeddings, default_max_layer, EmbeddingTable};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{Graph, GraphDataset};
use crate::spectral::sym_eigenvalues;

/// Negative eigenvalues below this in a density are reported.
pub const NEGATIVE_EIGENVALUE_WARNING: f64 = -1e-8;

/// Added on top of `-λmin` when suggesting a diagonal shift.
pub const SHIFT_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelVariant {
    #[serde(rename = "HAQJSK-A")]
    HaqjskA,
    #[serde(rename = "HAQJSK-D")]
    HaqjskD,
    #[serde(rename = "QJSU")]
    Qjsu,
}

impl KernelVariant {
    pub fn is_hierarchical(self) -> bool {
        !matches!(self, KernelVariant::Qjsu)
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelVariant::HaqjskA => "HAQJSK-A",
            KernelVariant::HaqjskD => "HAQJSK-D",
            KernelVariant::Qjsu => "QJSU",
        })
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haqjsk-a" => Ok(KernelVariant::HaqjskA),
            "haqjsk-d" => Ok(KernelVariant::HaqjskD),
            "qjsu" => Ok(KernelVariant::Qjsu),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel variant '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub variant: KernelVariant,
    /// Hierarchy depth.
    #[serde(rename = "H")]
    pub levels: usize,
    /// Level-1 prototype count.
    #[serde(rename = "M1")]
    pub prototypes: usize,
    /// Embedding depth; `None` picks `min(max shortest path, 10)`.
    #[serde(rename = "K")]
    pub max_layer: Option<usize>,
    pub seed: u64,
    /// Decay factor, used by QJSU only.
    pub mu: f64,
    /// Z-score embedding columns before clustering.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            variant: KernelVariant::HaqjskD,
            levels: 5,
            prototypes: 256,
            max_layer: None,
            seed: 42,
            mu: 1.0,
            standardize: false,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("H must be at least 1".into()));
        }
        if self.prototypes == 0 {
            return Err(Error::InvalidArgument("M1 must be at least 1".into()));
        }
        if self.max_layer == Some(0) {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// Symmetric Gram matrix plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    /// Configuration with `max_layer` resolved.
    pub config: KernelConfig,
    pub dataset_name: String,
    pub labels: Option<Vec<usize>>,
    pub min_eigenvalue: Option<f64>,
    /// Diagonal shift applied after assembly, if any.
    pub diagonal_shift: Option<f64>,
    /// Run manifest that produced the matrix.
    pub manifest: Option<String>,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Runs [`psd_diagnostics`] and stores the minimum eigenvalue.
    pub fn record_diagnostics(&mut self) -> Result<PsdReport> {
        let report = psd_diagnostics(self)?;
        self.min_eigenvalue = Some(report.min_eigenvalue);
        Ok(report)
    }

    /// Adds `shift` to the diagonal and records it.
    pub fn shift_diagonal(&mut self, shift: f64) {
        for i in 0..self.size() {
            self.values[(i, i)] += shift;
        }
        self.diagonal_shift = Some(self.diagonal_shift.unwrap_or(0.0) + shift);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub suggested_shift: f64,
}

/// Smallest eigenvalue and the diagonal shift that would lift it above zero.
/// Matrices that are already PSD get a zero shift.
pub fn psd_diagnostics(km: &KernelMatrix) -> Result<PsdReport> {
    let eig = sym_eigenvalues(&km.values)?;
    let min_eigenvalue = eig.first().copied().unwrap_or(0.0);
    let suggested_shift = if min_eigenvalue < 0.0 {
        -min_eigenvalue + SHIFT_MARGIN
    } else {
        0.0
    };
    Ok(PsdReport {
        min_eigenvalue,
        suggested_shift,
    })
}

fn checked_entropy(m: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigenvalues(m)?;
    if let Some(&min) = eig.first() {
        if min < NEGATIVE_EIGENVALUE_WARNING {
            warn!("density has eigenvalue {min:e}; clamping negative part before entropy");
        }
    }
    Ok(spectrum_entropy(&eig))
}

fn check_keys(p: &AlignedStructures, q: &AlignedStructures) -> Result<()> {
    let diff = p.key.differences(&q.key);
    if diff.is_empty() && p.levels.len() == q.levels.len() {
        Ok(())
    } else {
        Err(Error::ConfigMismatch(diff.join(", ")))
    }
}

fn pad_to(rho: &DensityMatrix, dim: usize) -> DensityMatrix {
    if rho.dim() == dim {
        rho.clone()
    } else {
        rho.padded(dim)
    }
}

/// Reference evaluation of the aligned-adjacency kernel from full matrices.
pub fn haqjsk_a(p: &AlignedStructures, q: &AlignedStructures) -> Result<f64> {
    check_keys(p, q)?;
    p.levels
        .iter()
        .zip(&q.levels)
        .try_fold(0.0, |acc, (lp, lq)| {
            let theta_p = density_matrix_from_adjacency(&lp.adjacency)?;
            let theta_q = density_matrix_from_adjacency(&lq.adjacency)?;
            let dim = theta_p.dim().max(theta_q.dim());
            let d = qjsd(&pad_to(&theta_p, dim), &pad_to(&theta_q, dim))?;
            Ok(acc + (-d).exp())
        })
}

/// Reference evaluation of the aligned-density kernel from full matrices.
pub fn haqjsk_d(p: &AlignedStructures, q: &AlignedStructures) -> Result<f64> {
    check_keys(p, q)?;
    p.levels
        .iter()
        .zip(&q.levels)
        .try_fold(0.0, |acc, (lp, lq)| {
            let dim = lp.density.dim().max(lq.density.dim());
            let d = qjsd(&pad_to(&lp.density, dim), &pad_to(&lq.density, dim))?;
            Ok(acc + (-d).exp())
        })
}

/// Unaligned baseline kernel `exp(-μ QJSD)` with zero padding.
pub fn qjsu(gp: &Graph, gq: &Graph, mu: f64) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "mu must be positive, got {mu}"
        )));
    }
    let rp = density_matrix_infinite(gp)?;
    let rq = density_matrix_infinite(gq)?;
    let dim = rp.dim().max(rq.dim());
    let d = qjsd(&pad_to(&rp, dim), &pad_to(&rq, dim))?;
    Ok((-mu * d).exp())
}

/// A density restricted to the rows/columns where it is nonzero, with its
/// entropy. Zero rows only contribute zero eigenvalues, so entropies of
/// mixtures can be taken on the union of two supports.
#[derive(Debug, Clone)]
struct SupportBlock {
    support: Vec<usize>,
    block: DMatrix<f64>,
    entropy: f64,
}

impl SupportBlock {
    fn new(m: &DMatrix<f64>) -> Result<Self> {
        let support: Vec<usize> = (0..m.nrows())
            .filter(|&i| m.row(i).iter().any(|&x| x != 0.0))
            .collect();
        let block = m.select_rows(&support).select_columns(&support);
        let entropy = checked_entropy(&block)?;
        Ok(SupportBlock {
            support,
            block,
            entropy,
        })
    }

    /// Entropy of `(self + other) / 2`.
    fn mixture_entropy(&self, other: &SupportBlock) -> Result<f64> {
        let mut union: Vec<usize> = self.support.iter().chain(&other.support).copied().collect();
        union.sort_unstable();
        union.dedup();
        let locate = |s: &[usize]| -> Vec<usize> {
            s.iter().map(|i| union.binary_search(i).unwrap()).collect()
        };
        let mut mix = DMatrix::zeros(union.len(), union.len());
        for part in [self, other] {
            let at = locate(&part.support);
            for (a, &i) in at.iter().enumerate() {
                for (b, &j) in at.iter().enumerate() {
                    mix[(i, j)] += part.block[(a, b)];
                }
            }
        }
        mix *= 0.5;
        checked_entropy(&mix)
    }

    fn divergence(&self, other: &SupportBlock) -> Result<f64> {
        Ok(divergence_from_entropies(
            self.mixture_entropy(other)?,
            self.entropy,
            other.entropy,
        ))
    }
}

/// Everything the alignment phase produces for a dataset.
#[derive(Debug, Clone)]
pub struct FittedDataset {
    pub table: EmbeddingTable,
    pub alignment: HierarchicalAlignment,
    /// `[graph][h-1][k-1]`.
    pub correspondences: Vec<Vec<Vec<CorrespondenceMatrix>>>,
    pub densities: Vec<DensityMatrix>,
    pub structures: Vec<AlignedStructures>,
}

/// Wall time of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

struct Stopwatch {
    stages: Vec<StageTiming>,
    last: Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            stages: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

/// `K` used for a dataset under `cfg`.
pub fn resolved_max_layer(ds: &GraphDataset, cfg: &KernelConfig) -> usize {
    cfg.max_layer.unwrap_or_else(|| default_max_layer(ds))
}

/// Embeddings, prototypes, correspondences and aligned structures.
pub fn fit_dataset(ds: &GraphDataset, cfg: &KernelConfig, exec: Exec) -> Result<FittedDataset> {
    let mut watch = Stopwatch::start();
    fit_dataset_timed(ds, cfg, exec, &mut watch)
}

fn fit_dataset_timed(
    ds: &GraphDataset,
    cfg: &KernelConfig,
    exec: Exec,
    watch: &mut Stopwatch,
) -> Result<FittedDataset> {
    cfg.validate()?;
    let max_layer = resolved_max_layer(ds, cfg);
    let mut table = dataset_embeddings(ds, max_layer, exec)?;
    if cfg.standardize {
        table = table.standardized();
    }
    watch.lap("embeddings");

    let alignment = HierarchicalAlignment::fit(&table, cfg.prototypes, cfg.levels, cfg.seed, exec)?;
    watch.lap("prototypes");

    let densities = exec
        .map_slice(ds.graphs(), density_matrix_infinite)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    watch.lap("densities");

    let correspondences = exec
        .map_range(ds.len(), |p| alignment.correspondences(&table, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let structures = exec
        .map_range(ds.len(), |p| {
            alignment.aligned_structures(&ds.graphs()[p], &densities[p], &correspondences[p])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    watch.lap("alignment");

    Ok(FittedDataset {
        table,
        alignment,
        correspondences,
        densities,
        structures,
    })
}

/// Full pipeline: builds the `N × N` kernel matrix of `ds`.
pub fn kernel_matrix(ds: &GraphDataset, cfg: &KernelConfig, exec: Exec) -> Result<KernelMatrix> {
    kernel_matrix_timed(ds, cfg, exec).map(|(km, _)| km)
}

/// [`kernel_matrix`] plus per-stage wall times.
pub fn kernel_matrix_timed(
    ds: &GraphDataset,
    cfg: &KernelConfig,
    exec: Exec,
) -> Result<(KernelMatrix, Vec<StageTiming>)> {
    cfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "kernel matrix needs at least 2 graphs, dataset has {}",
            ds.len()
        )));
    }
    let mut watch = Stopwatch::start();
    let mut config = cfg.clone();

    // Per-graph blocks, one per level (a single one for QJSU).
    let blocks: Vec<Vec<SupportBlock>> = match cfg.variant {
        KernelVariant::Qjsu => {
            let densities = exec
                .map_slice(ds.graphs(), density_matrix_infinite)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            watch.lap("densities");
            collect_blocks(exec.map_slice(&densities, |rho| {
                Ok(vec![SupportBlock::new(rho.entries())?])
            }))?
        }
        KernelVariant::HaqjskA | KernelVariant::HaqjskD => {
            let fitted = fit_dataset_timed(ds, cfg, exec, &mut watch)?;
            config.max_layer = Some(fitted.alignment.max_layer());
            let variant = cfg.variant;
            collect_blocks(exec.map_slice(&fitted.structures, |s| {
                s.levels
                    .iter()
                    .map(|level| match variant {
                        KernelVariant::HaqjskA => SupportBlock::new(
                            density_matrix_from_adjacency(&level.adjacency)?.entries(),
                        ),
                        _ => SupportBlock::new(level.density.entries()),
                    })
                    .collect()
            }))?
        }
    };
    watch.lap("level-densities");

    let n = ds.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mu = if cfg.variant.is_hierarchical() {
        1.0
    } else {
        cfg.mu
    };
    let values = exec.map_slice(&pairs, |&(i, j)| -> Result<f64> {
        blocks[i]
            .iter()
            .zip(&blocks[j])
            .try_fold(0.0, |acc, (bp, bq)| {
                Ok(acc + (-mu * bp.divergence(bq)?).exp())
            })
    });
    let mut km = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        km[(i, j)] = v;
        km[(j, i)] = v;
    }
    watch.lap("pairwise");

    Ok((
        KernelMatrix {
            values: km,
            config,
            dataset_name: ds.name().to_string(),
            labels: ds.labels(),
            min_eigenvalue: None,
            diagonal_shift: None,
            manifest: None,
        },
        watch.stages,
    ))
}

fn collect_blocks(per_graph: Vec<Result<Vec<SupportBlock>>>) -> Result<Vec<Vec<SupportBlock>>> {
    per_graph.into_iter().collect()
}
