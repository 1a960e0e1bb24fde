//! Dense symmetric eigendecomposition and eigenvalue grouping.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 10_000;

/// `m = V diag(λ) Vᵀ` with eigenvalues ascending and eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        scaled * v.transpose()
    }

    pub fn spectral_range(&self) -> f64 {
        match self.dim() {
            0 => 0.0,
            n => self.eigenvalues[n - 1] - self.eigenvalues[0],
        }
    }
}

/// Eigenvalues sharing (numerically) one eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenGroup {
    pub representative_value: f64,
    pub column_indices: Vec<usize>,
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOLERANCE || asym.is_nan() {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Full symmetric eigendecomposition, eigenvalues sorted ascending.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_symmetric(m)?;
    let n = m.nrows();
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NoConvergence(n))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, ascending. Cheaper than [`sym_eig`] when the basis is
/// not needed.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence(m.nrows()));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Default degeneracy tolerance: `1e-8 · max(1, λmax − λmin)`.
pub fn default_group_tolerance(d: &SpectralDecomposition) -> f64 {
    1e-8 * d.spectral_range().max(1.0)
}

/// Splits the (sorted) spectrum into runs whose members lie within `tol` of
/// the run's first eigenvalue.
pub fn group_eigenvalues(d: &SpectralDecomposition, tol: f64) -> Vec<EigenGroup> {
    let mut groups: Vec<EigenGroup> = Vec::new();
    for (j, &lambda) in d.eigenvalues.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (lambda - g.representative_value).abs() <= tol => g.column_indices.push(j),
            _ => groups.push(EigenGroup {
                representative_value: lambda,
                column_indices: vec![j],
            }),
        }
    }
    groups
}
