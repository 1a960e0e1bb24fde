//! Continuous-time quantum walks on graphs: initial state, evolution,
//! time-averaged mixed states, von Neumann entropy and the quantum
//! Jensen-Shannon divergence.
//!
//! The walk Hamiltonian is the graph Laplacian `L = Φ Λ Φᵀ` (eigenvectors as
//! columns). Starting from `ψ₀(u) = sqrt(d_u / Σ d)`, the state at time `t` is
//! `Φ e^{-iΛt} Φᵀ ψ₀` and the infinite-time average of `|ψ_t⟩⟨ψ_t|` collapses
//! to a sum of eigenspace projections:
//!
//! ```text
//! ρ∞ = Σ_λ (P_λ ψ₀)(P_λ ψ₀)ᵀ,   P_λ = Σ_{a ∈ B_λ} φ_a φ_aᵀ
//! ```
//!
//! which is real, symmetric, PSD and has unit trace.

use std::f64::consts::LN_2;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{weighted_laplacian, Graph};
use crate::spectral::{
    default_group_tolerance, group_eigenvalues, max_asymmetry, sym_eig, sym_eigenvalues,
    SpectralDecomposition,
};

/// Eigenvalues below this are treated as exact zeros in entropies.
pub const EIGENVALUE_CLAMP: f64 = 1e-12;

/// Pure CTQW state as complex amplitudes over the vertex basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: DVector<Complex<f64>>,
}

impl QuantumState {
    pub fn from_real(amplitudes: &DVector<f64>) -> Self {
        QuantumState {
            amplitudes: amplitudes.map(|a| Complex::new(a, 0.0)),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Real symmetric mixed-state density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<f64>);

impl DensityMatrix {
    /// Wraps a square matrix symmetric to within `1e-9`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::NotSquare(entries.nrows(), entries.ncols()));
        }
        let asym = max_asymmetry(&entries);
        if asym > 1e-9 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(DensityMatrix(entries))
    }

    /// Pure state `|ψ⟩⟨ψ|` for a real amplitude vector.
    pub fn pure(psi: &DVector<f64>) -> Self {
        DensityMatrix(psi * psi.transpose())
    }

    pub(crate) fn from_raw(entries: DMatrix<f64>) -> Self {
        DensityMatrix(entries)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Embeds into a larger zero-padded matrix (new rows/columns are zero).
    pub fn padded(&self, dim: usize) -> DensityMatrix {
        let n = self.dim();
        assert!(dim >= n, "cannot pad a {n}x{n} matrix down to {dim}");
        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (n, n)).copy_from(&self.0);
        DensityMatrix(m)
    }
}

/// `sqrt(d_u / Σ d)` with `d` the row sums of `adjacency` (diagonal weights
/// included). Falls back to the uniform state when every degree is zero.
pub fn initial_amplitudes(adjacency: &DMatrix<f64>) -> DVector<f64> {
    let n = adjacency.nrows();
    let degrees = DVector::from_iterator(n, adjacency.row_iter().map(|r| r.sum()));
    let total: f64 = degrees.sum();
    if total > 0.0 {
        degrees.map(|d| (d / total).sqrt())
    } else {
        DVector::from_element(n, 1.0 / (n as f64).sqrt())
    }
}

pub fn initial_state(g: &Graph) -> QuantumState {
    QuantumState::from_real(&initial_amplitudes(g.adjacency()))
}

/// Eigenbasis coordinates `Φᵀψ₀` of the initial state.
fn eigen_coordinates(d: &SpectralDecomposition, psi0: &DVector<f64>) -> DVector<f64> {
    d.eigenvectors.tr_mul(psi0)
}

/// State at time `t`: `Φ e^{-iΛt} Φᵀ ψ₀`.
pub fn evolve_state(g: &Graph, t: f64) -> Result<QuantumState> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time must be non-negative, got {t}"
        )));
    }
    let psi0 = initial_amplitudes(g.adjacency());
    let d = sym_eig(&weighted_laplacian(g.adjacency()))?;
    let coords = eigen_coordinates(&d, &psi0);
    let n = psi0.len();
    let phased: Vec<Complex<f64>> = (0..n)
        .map(|a| Complex::from_polar(coords[a], -d.eigenvalues[a] * t))
        .collect();
    let amplitudes = DVector::from_fn(n, |r, _| {
        (0..n).fold(Complex::new(0.0, 0.0), |acc, a| {
            acc + phased[a] * d.eigenvectors[(r, a)]
        })
    });
    Ok(QuantumState { amplitudes })
}

/// Infinite-time mixed state of the CTQW on an arbitrary symmetric
/// non-negative weight matrix (the graph-to-density map used for aligned
/// adjacency matrices).
///
/// Zero-degree rows carry zero amplitude and are decoupled from the rest of
/// the walk, so when the matrix has any edges the walk is solved on the
/// active rows only and embedded back.
pub fn density_matrix_from_adjacency(adjacency: &DMatrix<f64>) -> Result<DensityMatrix> {
    let n = adjacency.nrows();
    let active: Vec<usize> = (0..n).filter(|&i| adjacency.row(i).sum() > 0.0).collect();
    if active.is_empty() || active.len() == n {
        return density_on_all_rows(adjacency);
    }
    let sub = adjacency.select_rows(&active).select_columns(&active);
    let block = density_on_all_rows(&sub)?.into_inner();
    let mut rho = DMatrix::zeros(n, n);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            rho[(i, j)] = block[(a, b)];
        }
    }
    Ok(DensityMatrix(rho))
}

fn density_on_all_rows(adjacency: &DMatrix<f64>) -> Result<DensityMatrix> {
    let psi0 = initial_amplitudes(adjacency);
    let d = sym_eig(&weighted_laplacian(adjacency))?;
    let coords = eigen_coordinates(&d, &psi0);
    let n = psi0.len();
    let mut rho = DMatrix::zeros(n, n);
    for group in group_eigenvalues(&d, default_group_tolerance(&d)) {
        let mut proj = DVector::zeros(n);
        for &a in &group.column_indices {
            proj.axpy(coords[a], &d.eigenvectors.column(a), 1.0);
        }
        rho.ger(1.0, &proj, &proj, 1.0);
    }
    symmetrize(&mut rho);
    Ok(DensityMatrix(rho))
}

/// `ρ∞` of the CTQW on `g`.
pub fn density_matrix_infinite(g: &Graph) -> Result<DensityMatrix> {
    density_matrix_from_adjacency(g.adjacency())
}

/// Trapezoidal average of `Re |ψ_t⟩⟨ψ_t|` over `[0, horizon]` sampled at
/// `steps` equally spaced times.
pub fn density_matrix_time_avg(g: &Graph, horizon: f64, steps: usize) -> Result<DensityMatrix> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 quadrature points".into(),
        ));
    }
    let psi0 = initial_amplitudes(g.adjacency());
    let d = sym_eig(&weighted_laplacian(g.adjacency()))?;
    let coords = eigen_coordinates(&d, &psi0);
    let n = psi0.len();
    let dt = horizon / (steps - 1) as f64;

    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut cos_part = DVector::zeros(n);
    let mut sin_part = DVector::zeros(n);
    let mut re = DVector::zeros(n);
    let mut im = DVector::zeros(n);
    for s in 0..steps {
        let t = s as f64 * dt;
        let w = if s == 0 || s == steps - 1 { 0.5 } else { 1.0 };
        for a in 0..n {
            let (sin, cos) = (d.eigenvalues[a] * t).sin_cos();
            cos_part[a] = coords[a] * cos;
            sin_part[a] = -coords[a] * sin;
        }
        re.gemv(1.0, &d.eigenvectors, &cos_part, 0.0);
        im.gemv(1.0, &d.eigenvectors, &sin_part, 0.0);
        acc.ger(w, &re, &re, 1.0);
        acc.ger(w, &im, &im, 1.0);
    }
    acc *= dt / horizon;
    symmetrize(&mut acc);
    Ok(DensityMatrix(acc))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `-Σ ξ ln ξ` over a spectrum, with eigenvalues below [`EIGENVALUE_CLAMP`]
/// dropped.
pub fn spectrum_entropy(eigenvalues: &[f64]) -> f64 {
    let h: f64 = eigenvalues
        .iter()
        .filter(|&&x| x > EIGENVALUE_CLAMP)
        .map(|&x| -x * x.ln())
        .sum();
    h.max(0.0)
}

/// Von Neumann entropy in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(spectrum_entropy(&sym_eigenvalues(rho.entries())?))
}

/// Quantum Jensen-Shannon divergence, clamped into `[0, ln 2]`.
pub fn qjsd(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    let mix = DensityMatrix((rho.entries() + sigma.entries()) * 0.5);
    let h_mix = von_neumann_entropy(&mix)?;
    Ok(divergence_from_entropies(
        h_mix,
        von_neumann_entropy(rho)?,
        von_neumann_entropy(sigma)?,
    ))
}

/// `H(mix) − (½H(ρ) + ½H(σ))`, symmetric in the two marginal entropies.
pub(crate) fn divergence_from_entropies(h_mix: f64, h_rho: f64, h_sigma: f64) -> f64 {
    (h_mix - (0.5 * h_rho + 0.5 * h_sigma)).clamp(0.0, LN_2)
}
