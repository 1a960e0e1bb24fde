//! C-SVM on a precomputed kernel, trained with two-variable SMO.
//!
//! Dual: `min ½ αᵀQα − Σα` subject to `0 ≤ α ≤ C`, `yᵀα = 0`, with
//! `Q_ij = y_i y_j K_ij`. The working pair is the maximal violating pair.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::max_asymmetry;

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const MAX_ITERATIONS: usize = 100_000;

/// Curvature floor along the working direction, for non-PSD kernels.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Training rows with `α > 0`.
    pub support_indices: Vec<usize>,
    /// `α_i y_i` for each support row.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    /// Classes mapped to `+1` and `-1`.
    pub class_pair: (usize, usize),
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective `½ αᵀQα − Σα`.
    pub objective: f64,
}

impl SvmModel {
    /// `Σ α_i y_i K(x_i, x) + b`; `k_row` holds kernel values against every
    /// training row.
    pub fn decision_value(&self, k_row: &[f64]) -> f64 {
        self.support_indices
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(&s, &c)| c * k_row[s])
            .sum::<f64>()
            + self.bias
    }

    /// `±1` label and decision value.
    pub fn predict(&self, k_row: &[f64]) -> (i8, f64) {
        let d = self.decision_value(k_row);
        (if d > 0.0 { 1 } else { -1 }, d)
    }
}

fn check_kernel(k: &DMatrix<f64>, n: usize) -> Result<()> {
    if k.nrows() != k.ncols() {
        return Err(Error::NotSquare(k.nrows(), k.ncols()));
    }
    if k.nrows() != n {
        return Err(Error::DimensionMismatch(k.nrows(), n));
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "kernel has non-finite entries".into(),
        ));
    }
    let asym = max_asymmetry(k);
    if asym > 1e-9 * k.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Trains a binary C-SVM. `labels` must be `±1` with both signs present.
pub fn smo_train(k: &DMatrix<f64>, labels: &[f64], c: f64, tol: f64) -> Result<SvmModel> {
    let n = labels.len();
    check_kernel(k, n)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "C must be positive, got {c}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(Error::InvalidArgument(
            "both classes must be present".into(),
        ));
    }

    let y = labels;
    let q = |a: usize, b: usize| y[a] * y[b] * k[(a, b)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        let (mut i, mut g_max) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut g_min) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                i = t;
                g_max = v;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                j = t;
                g_min = v;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let objective = 0.5
        * alpha
            .iter()
            .zip(&grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>();
    let bias = -offset(&alpha, &grad, y, c);
    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let dual_coefficients = support_indices.iter().map(|&t| alpha[t] * y[t]).collect();
    Ok(SvmModel {
        support_indices,
        dual_coefficients,
        bias,
        class_pair: (0, 1),
        converged,
        iterations,
        objective,
    })
}

/// Offset `ρ` with `f(x) = Σ α y K − ρ`: the mean of `y_i G_i` over free
/// variables, else the midpoint of the feasible interval.
fn offset(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PairMachine {
    /// Rows of the full kernel used for training.
    rows: Vec<usize>,
    model: SvmModel,
}

/// One-vs-one multiclass C-SVM over rows of a full kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    classes: Vec<usize>,
    machines: Vec<PairMachine>,
}

impl MulticlassSvm {
    /// Trains on rows `train` of `km`; `labels` is indexed by row of `km`.
    /// A single-class training set yields a constant predictor.
    pub fn fit(
        km: &DMatrix<f64>,
        labels: &[usize],
        train: &[usize],
        c: f64,
        tol: f64,
    ) -> Result<Self> {
        if km.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(km.nrows(), labels.len()));
        }
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let mut classes: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
        classes.sort_unstable();
        classes.dedup();
        let mut machines = Vec::new();
        for (ia, &a) in classes.iter().enumerate() {
            for &b in &classes[ia + 1..] {
                let rows: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&r| labels[r] == a || labels[r] == b)
                    .collect();
                let y: Vec<f64> = rows
                    .iter()
                    .map(|&r| if labels[r] == a { 1.0 } else { -1.0 })
                    .collect();
                let sub = km.select_rows(&rows).select_columns(&rows);
                let mut model = smo_train(&sub, &y, c, tol)?;
                model.class_pair = (a, b);
                machines.push(PairMachine { rows, model });
            }
        }
        Ok(MulticlassSvm { classes, machines })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.model.converged)
    }

    /// Majority vote over pairwise machines; ties go to the smallest class.
    pub fn predict(&self, km: &DMatrix<f64>, row: usize) -> usize {
        if self.classes.len() == 1 {
            return self.classes[0];
        }
        let mut votes = vec![0usize; self.classes.len()];
        for m in &self.machines {
            let k_row: Vec<f64> = m.rows.iter().map(|&r| km[(row, r)]).collect();
            let (a, b) = m.model.class_pair;
            let winner = if m.model.predict(&k_row).0 > 0 { a } else { b };
            votes[self.classes.binary_search(&winner).unwrap()] += 1;
        }
        let best = votes.iter().copied().max().unwrap();
        self.classes[votes.iter().position(|&v| v == best).unwrap()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_identity_kernel() {
        let k = DMatrix::identity(2, 2);
        let m = smo_train(&k, &[1.0, -1.0], 10.0, DEFAULT_TOLERANCE).unwrap();
        assert!(m.converged);
        assert_eq!(m.support_indices, vec![0, 1]);
        // α = 1 for both, b = 0
        assert!((m.dual_coefficients[0] - 1.0).abs() < 1e-12);
        assert!((m.dual_coefficients[1] + 1.0).abs() < 1e-12);
        assert_eq!(m.predict(&[1.0, 0.0]).0, 1);
        assert_eq!(m.predict(&[0.0, 1.0]).0, -1);
        let (d0, d1) = (m.decision_value(&[1.0, 0.0]), m.decision_value(&[0.0, 1.0]));
        assert!((d0 + d1).abs() < 1e-12);
        assert!((m.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let k = DMatrix::identity(3, 3);
        assert!(smo_train(&k, &[1.0, 1.0, 1.0], 1.0, 1e-3).is_err());
        assert!(smo_train(&k, &[1.0, -1.0, 1.0], 0.0, 1e-3).is_err());
        assert!(smo_train(&k, &[1.0, -1.0], 1.0, 1e-3).is_err());
        let mut bad = k.clone();
        bad[(0, 1)] = f64::NAN;
        bad[(1, 0)] = f64::NAN;
        assert!(smo_train(&bad, &[1.0, -1.0, 1.0], 1.0, 1e-3).is_err());
        let mut asym = k;
        asym[(0, 1)] = 0.5;
        assert!(matches!(
            smo_train(&asym, &[1.0, -1.0, 1.0], 1.0, 1e-3),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        // points on a line, linear kernel
        let x = [-3.0, -2.0, -1.5, 1.0, 2.5, 4.0];
        let y = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let k = DMatrix::from_fn(6, 6, |a, b| x[a] * x[b] + 1.0);
        let c = 100.0;
        let m = smo_train(&k, &y, c, DEFAULT_TOLERANCE).unwrap();
        for (&s, &coef) in m.support_indices.iter().zip(&m.dual_coefficients) {
            if coef.abs() < c {
                let row: Vec<f64> = k.row(s).iter().copied().collect();
                let (label, d) = m.predict(&row);
                assert_eq!(label as f64, y[s]);
                assert!(d.abs() >= 1.0 - DEFAULT_TOLERANCE);
            }
        }
        assert!(m.dual_coefficients.iter().all(|c2| c2.abs() <= c));
        assert!(m.dual_coefficients.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn indefinite_kernel_still_terminates() {
        let k = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.0]);
        let m = smo_train(&k, &[1.0, -1.0, 1.0], 1.0, DEFAULT_TOLERANCE).unwrap();
        assert!(m.dual_coefficients.iter().all(|c| c.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn multiclass_block_kernel() {
        let labels = [0, 0, 1, 1, 2, 2, 2];
        let km = DMatrix::from_fn(7, 7, |a, b| if labels[a] == labels[b] { 1.0 } else { 0.0 });
        let train: Vec<usize> = (0..7).collect();
        let svm = MulticlassSvm::fit(&km, &labels, &train, 1.0, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(svm.classes(), &[0, 1, 2]);
        assert!(svm.converged());
        for r in 0..7 {
            assert_eq!(svm.predict(&km, r), labels[r]);
        }
        let single = MulticlassSvm::fit(&km, &labels, &[0, 1], 1.0, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(single.predict(&km, 5), 0);
    }
}
