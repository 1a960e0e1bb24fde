//! Built-in analytic checks, run by `haqjsk selftest`.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctqw::{
    density_matrix_infinite, density_matrix_time_avg, qjsd, von_neumann_entropy, DensityMatrix,
};
use crate::embedding::db_representation;
use crate::graph::Graph;
use crate::svm::{smo_train, DEFAULT_TOLERANCE};

/// Reference values the checks compare against. Tests can perturb them to
/// confirm a wrong constant is caught.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expected {
    pub ln_two: f64,
    /// Every entry of the long-time density of `K2`.
    pub k2_density_entry: f64,
    pub tolerance: f64,
    /// Max-entry gap allowed between the closed form and a short time average.
    pub time_average_tolerance: f64,
}

impl Default for Expected {
    fn default() -> Self {
        Expected {
            ln_two: LN_2,
            k2_density_entry: 0.5,
            tolerance: 1e-10,
            time_average_tolerance: 2e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, error: f64, limit: f64) -> CheckResult {
    CheckResult {
        name,
        passed: error <= limit,
        detail: format!("error {error:.3e} (limit {limit:.1e})"),
    }
}

fn failed(name: &'static str, detail: impl ToString) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail: detail.to_string(),
    }
}

fn k2() -> Graph {
    Graph::from_edges(2, &[(0, 1)]).unwrap()
}

fn k2_density(e: &Expected) -> CheckResult {
    match density_matrix_infinite(&k2()) {
        Ok(rho) => {
            let err = rho
                .entries()
                .iter()
                .map(|x| (x - e.k2_density_entry).abs())
                .fold(0.0, f64::max);
            check("k2-density", err, e.tolerance)
        }
        Err(err) => failed("k2-density", err),
    }
}

fn entropy_closed_forms(e: &Expected) -> CheckResult {
    let run = || -> crate::Result<f64> {
        let mut err: f64 = 0.0;
        for n in 1..=8 {
            let mixed = DensityMatrix::new(DMatrix::identity(n, n) / n as f64)?;
            err = err.max((von_neumann_entropy(&mixed)? - (n as f64).ln()).abs());
        }
        let half = DensityMatrix::new(DMatrix::identity(2, 2) * 0.5)?;
        err = err.max((von_neumann_entropy(&half)? - e.ln_two).abs());
        err = err.max(von_neumann_entropy(&density_matrix_infinite(&k2())?)?.abs());
        Ok(err)
    };
    match run() {
        Ok(err) => check("entropy-closed-forms", err, e.tolerance),
        Err(err) => failed("entropy-closed-forms", err),
    }
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> crate::Result<DensityMatrix> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let m = &b * b.transpose();
    let tr = m.trace();
    DensityMatrix::new(m / tr)
}

fn qjsd_bounds(e: &Expected) -> CheckResult {
    let run = || -> crate::Result<f64> {
        let e0 = DensityMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))?;
        let e1 = DensityMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]))?;
        let mut err = (qjsd(&e0, &e1)? - e.ln_two).abs();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..=6);
            let (p, q) = (random_density(&mut rng, n)?, random_density(&mut rng, n)?);
            let d = qjsd(&p, &q)?;
            err = err.max(-d).max(d - e.ln_two);
            err = err.max((d - qjsd(&q, &p)?).abs());
            err = err.max(qjsd(&p, &p)?.abs());
        }
        Ok(err)
    };
    match run() {
        Ok(err) => check("qjsd-bounds", err, e.tolerance),
        Err(err) => failed("qjsd-bounds", err),
    }
}

fn time_average(e: &Expected) -> CheckResult {
    let p4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let run = || -> crate::Result<f64> {
        let exact = density_matrix_infinite(&p4)?;
        let approx = density_matrix_time_avg(&p4, 200.0, 20_001)?;
        Ok((exact.entries() - approx.entries()).amax())
    };
    match run() {
        Ok(err) => check("time-average-convergence", err, e.time_average_tolerance),
        Err(err) => failed("time-average-convergence", err),
    }
}

fn path_embedding(e: &Expected) -> CheckResult {
    // P3 rooted at an end: the 1-layer subgraph is K2, the 2-layer one is P3
    let p3 = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    match db_representation(&p3, 0, 2) {
        Ok(v) => {
            let err = (v.values[0] - e.ln_two)
                .abs()
                .max((v.values[1] - 1.5 * e.ln_two).abs());
            check("p3-embedding", err, e.tolerance)
        }
        Err(err) => failed("p3-embedding", err),
    }
}

fn svm_two_points(e: &Expected) -> CheckResult {
    match smo_train(
        &DMatrix::identity(2, 2),
        &[1.0, -1.0],
        10.0,
        DEFAULT_TOLERANCE,
    ) {
        Ok(m) => {
            let d0 = m.decision_value(&[1.0, 0.0]);
            let d1 = m.decision_value(&[0.0, 1.0]);
            check(
                "svm-two-points",
                (d0 - 1.0).abs().max((d1 + 1.0).abs()),
                e.tolerance,
            )
        }
        Err(err) => failed("svm-two-points", err),
    }
}

/// Runs every check against `expected`.
pub fn run_with(expected: &Expected) -> Vec<CheckResult> {
    vec![
        k2_density(expected),
        entropy_closed_forms(expected),
        qjsd_bounds(expected),
        time_average(expected),
        path_embedding(expected),
        svm_two_points(expected),
    ]
}

pub fn run() -> Vec<CheckResult> {
    run_with(&Expected::default())
}
