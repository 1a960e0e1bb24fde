//! Repeated stratified k-fold cross-validation of a precomputed kernel.

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kernels::{KernelMatrix, KernelVariant};
use crate::rng::substream;
use crate::svm::{MulticlassSvm, DEFAULT_TOLERANCE};

pub const DEFAULT_C_GRID: [f64; 7] = [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub inner_folds: usize,
    pub c_grid: Vec<f64>,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            repeats: 10,
            inner_folds: 5,
            c_grid: DEFAULT_C_GRID.to_vec(),
            seed: 42,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Accuracies in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub dataset: String,
    pub variant: Option<KernelVariant>,
    #[serde(rename = "H")]
    pub levels: Option<usize>,
    #[serde(rename = "M1")]
    pub prototypes: Option<usize>,
    #[serde(rename = "K")]
    pub max_layer: Option<usize>,
    pub seed: u64,
    pub folds: usize,
    pub repeats: usize,
    pub mean_accuracy: f64,
    pub std_error: f64,
    pub per_repeat: Vec<f64>,
    /// Chosen C per outer fold, repeat-major.
    pub c_selected: Vec<f64>,
    /// Run manifest that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes stay balanced. Falls
/// back to a plain shuffle when some class has fewer than `folds` members.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64, stream: &str) -> Vec<usize> {
    let mut rng = substream(seed, stream);
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members =
        |c: usize| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == c).collect() };
    let mut assignment = vec![0; labels.len()];
    if classes.iter().any(|&c| members(c).len() < folds) {
        warn!("a class has fewer than {folds} members; using unstratified folds");
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut rng);
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % folds;
        }
        return assignment;
    }
    let mut dealt = 0;
    for c in classes {
        let mut m = members(c);
        m.shuffle(&mut rng);
        for i in m {
            assignment[i] = dealt % folds;
            dealt += 1;
        }
    }
    assignment
}

fn accuracy_count(
    km: &DMatrix<f64>,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    c: f64,
    tol: f64,
) -> Result<usize> {
    let svm = MulticlassSvm::fit(km, labels, train, c, tol)?;
    if !svm.converged() {
        warn!("SMO hit the iteration cap at C = {c}");
    }
    Ok(test
        .iter()
        .filter(|&&r| svm.predict(km, r) == labels[r])
        .count())
}

fn split(rows: &[usize], fold_of: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..rows.len()).partition(|&i| fold_of[i] == fold);
    (
        train.into_iter().map(|i| rows[i]).collect(),
        test.into_iter().map(|i| rows[i]).collect(),
    )
}

/// Picks C by inner cross-validation on `train`; ties go to the smallest C.
fn select_c(
    km: &DMatrix<f64>,
    labels: &[usize],
    train: &[usize],
    cfg: &CvConfig,
    stream: &str,
) -> Result<f64> {
    let mut grid = cfg.c_grid.clone();
    grid.sort_by(f64::total_cmp);
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let inner = cfg.inner_folds.min(train.len());
    let sub_labels: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
    let fold_of = stratified_folds(&sub_labels, inner, cfg.seed, stream);
    let mut best = (0usize, grid[0]);
    for (gi, &c) in grid.iter().enumerate() {
        let mut correct = 0;
        for f in 0..inner {
            let (tr, te) = split(train, &fold_of, f);
            if tr.is_empty() || te.is_empty() {
                continue;
            }
            correct += accuracy_count(km, labels, &tr, &te, c, cfg.tolerance)?;
        }
        if gi == 0 || correct > best.0 {
            best = (correct, c);
        }
    }
    Ok(best.1)
}

struct RepeatOutcome {
    accuracy: f64,
    chosen: Vec<f64>,
}

fn run_repeat(
    km: &DMatrix<f64>,
    labels: &[usize],
    cfg: &CvConfig,
    repeat: usize,
) -> Result<RepeatOutcome> {
    let n = labels.len();
    let all: Vec<usize> = (0..n).collect();
    let fold_of = stratified_folds(labels, cfg.folds, cfg.seed, &format!("cv-outer/{repeat}"));
    let mut correct = 0;
    let mut chosen = Vec::with_capacity(cfg.folds);
    for f in 0..cfg.folds {
        let (train, test) = split(&all, &fold_of, f);
        let c = select_c(km, labels, &train, cfg, &format!("cv-inner/{repeat}/{f}"))?;
        chosen.push(c);
        correct += accuracy_count(km, labels, &train, &test, c, cfg.tolerance)?;
    }
    Ok(RepeatOutcome {
        accuracy: 100.0 * correct as f64 / n as f64,
        chosen,
    })
}

fn validate(values: &DMatrix<f64>, labels: &[usize], cfg: &CvConfig) -> Result<()> {
    if values.nrows() != values.ncols() {
        return Err(Error::NotSquare(values.nrows(), values.ncols()));
    }
    if values.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(values.nrows(), labels.len()));
    }
    if cfg.folds < 2 || cfg.folds > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "folds must be in [2, {}], got {}",
            labels.len(),
            cfg.folds
        )));
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    if cfg.inner_folds < 2 {
        return Err(Error::InvalidArgument(
            "inner folds must be at least 2".into(),
        ));
    }
    if cfg.c_grid.is_empty() || cfg.c_grid.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(
            "C grid must be non-empty and positive".into(),
        ));
    }
    Ok(())
}

/// Cross-validates a raw Gram matrix. Repeats run through `exec`.
pub fn cross_validate_values(
    values: &DMatrix<f64>,
    labels: &[usize],
    cfg: &CvConfig,
    exec: Exec,
) -> Result<CvReport> {
    validate(values, labels, cfg)?;
    let outcomes = exec
        .map_range(cfg.repeats, |r| run_repeat(values, labels, cfg, r))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let per_repeat: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let r = per_repeat.len() as f64;
    let mean_accuracy = per_repeat.iter().sum::<f64>() / r;
    let std_error = if per_repeat.len() > 1 {
        let var = per_repeat
            .iter()
            .map(|a| (a - mean_accuracy).powi(2))
            .sum::<f64>()
            / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };
    Ok(CvReport {
        dataset: String::new(),
        variant: None,
        levels: None,
        prototypes: None,
        max_layer: None,
        seed: cfg.seed,
        folds: cfg.folds,
        repeats: cfg.repeats,
        mean_accuracy,
        std_error,
        per_repeat,
        c_selected: outcomes.into_iter().flat_map(|o| o.chosen).collect(),
        manifest: None,
    })
}

/// Cross-validates a kernel matrix and tags the report with its provenance.
pub fn cross_validate(
    km: &KernelMatrix,
    labels: &[usize],
    cfg: &CvConfig,
    exec: Exec,
) -> Result<CvReport> {
    let mut report = cross_validate_values(&km.values, labels, cfg, exec)?;
    report.dataset = km.dataset_name.clone();
    let hierarchical = km.config.variant.is_hierarchical();
    report.variant = Some(km.config.variant);
    report.levels = hierarchical.then_some(km.config.levels);
    report.prototypes = hierarchical.then_some(km.config.prototypes);
    report.max_layer = if hierarchical {
        km.config.max_layer
    } else {
        None
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn block_kernel(labels: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(labels.len(), labels.len(), |a, b| {
            (labels[a] == labels[b]) as u8 as f64
        })
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let labels: Vec<usize> = (0..47).map(|i| usize::from(i % 3 == 0)).collect();
        let f = stratified_folds(&labels, 5, 1, "t");
        for fold in 0..5 {
            let size = f.iter().filter(|&&x| x == fold).count();
            assert!((9..=10).contains(&size));
            let ones = (0..47).filter(|&i| f[i] == fold && labels[i] == 1).count();
            assert!((3..=4).contains(&ones), "fold {fold} has {ones} positives");
        }
        assert_eq!(f, stratified_folds(&labels, 5, 1, "t"));
        assert_ne!(f, stratified_folds(&labels, 5, 2, "t"));
    }

    #[test]
    fn tiny_class_falls_back_to_plain_folds() {
        let labels = [0, 0, 0, 0, 0, 1];
        let f = stratified_folds(&labels, 3, 0, "t");
        for fold in 0..3 {
            assert_eq!(f.iter().filter(|&&x| x == fold).count(), 2);
        }
    }

    #[test]
    fn block_kernel_is_perfect() {
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let cfg = CvConfig {
            repeats: 3,
            ..CvConfig::default()
        };
        let r =
            cross_validate_values(&block_kernel(&labels), &labels, &cfg, Exec::Sequential).unwrap();
        assert_eq!(r.per_repeat, vec![100.0; 3]);
        assert_eq!(r.mean_accuracy, 100.0);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.c_selected.len(), 30);
        assert!(r.c_selected.iter().all(|c| DEFAULT_C_GRID.contains(c)));
    }

    #[test]
    fn random_labels_are_near_chance() {
        let mut rng = substream(3, "test");
        let n = 60;
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let km = DMatrix::from_fn(n, n, |a, b| (-(pts[a] - pts[b]).powi(2)).exp());
        let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);
        let cfg = CvConfig {
            repeats: 5,
            c_grid: vec![1.0],
            ..CvConfig::default()
        };
        let r = cross_validate_values(&km, &labels, &cfg, Exec::Sequential).unwrap();
        assert!(
            (r.mean_accuracy - 50.0).abs() <= 15.0,
            "{}",
            r.mean_accuracy
        );
        let mean = r.per_repeat.iter().sum::<f64>() / r.per_repeat.len() as f64;
        assert!((mean - r.mean_accuracy).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_relabel_invariant() {
        let mut rng = substream(4, "test");
        let n = 30;
        let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<usize> = pts
            .iter()
            .map(|&p| usize::from(p + rng.random_range(-0.5..0.5) > 0.0))
            .collect();
        let km = DMatrix::from_fn(n, n, |a, b| (-(pts[a] - pts[b]).powi(2)).exp());
        let cfg = CvConfig {
            folds: 3,
            repeats: 4,
            ..CvConfig::default()
        };
        let a = cross_validate_values(&km, &labels, &cfg, Exec::Parallel).unwrap();
        let b = cross_validate_values(&km, &labels, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let swapped: Vec<usize> = labels.iter().map(|&l| 1 - l).collect();
        let c = cross_validate_values(&km, &swapped, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a.per_repeat, c.per_repeat);
    }

    #[test]
    fn ties_pick_the_smallest_c() {
        // identity kernel: every C scores the same on held-out rows
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let cfg = CvConfig {
            folds: 2,
            repeats: 2,
            c_grid: vec![10.0, 1.0, 100.0],
            ..CvConfig::default()
        };
        let r = cross_validate_values(&DMatrix::identity(20, 20), &labels, &cfg, Exec::Sequential)
            .unwrap();
        assert!(r.c_selected.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn rejects_mismatched_sizes() {
        let km = DMatrix::identity(4, 4);
        assert!(
            cross_validate_values(&km, &[0, 1, 0], &CvConfig::default(), Exec::Sequential).is_err()
        );
        let cfg = CvConfig {
            folds: 1,
            ..CvConfig::default()
        };
        assert!(cross_validate_values(&km, &[0, 1, 0, 1], &cfg, Exec::Sequential).is_err());
    }
}
