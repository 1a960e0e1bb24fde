#![allow(dead_code)]

use haqjsk_core::graph::{Graph, GraphDataset};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// Erdős–Rényi graph.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Random spanning tree plus extra random edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: f64) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !edges.contains(&(i, j)) && rng.random_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

pub fn random_dataset(
    rng: &mut impl Rng,
    count: usize,
    sizes: std::ops::RangeInclusive<usize>,
) -> GraphDataset {
    let graphs = (0..count)
        .map(|i| {
            let n = rng.random_range(sizes.clone());
            let p = rng.random_range(0.15..0.5);
            random_graph(rng, n, p).with_label(Some(i % 2))
        })
        .collect();
    GraphDataset::new("random", graphs, 2).unwrap()
}

pub fn permuted_dataset(rng: &mut impl Rng, ds: &GraphDataset) -> GraphDataset {
    let graphs = ds
        .graphs()
        .iter()
        .map(|g| {
            let mut perm: Vec<usize> = (0..g.vertex_count()).collect();
            perm.shuffle(rng);
            g.permuted(&perm).unwrap()
        })
        .collect();
    GraphDataset::new("permuted", graphs, ds.class_count()).unwrap()
}

/// A random binary problem: Gaussian kernel on points in the plane,
/// noisy linear labels, plus kernel rows for held-out points.
pub struct SvmProblem {
    pub kernel: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub c: f64,
    /// Held-out rows against the training points.
    pub test_rows: DMatrix<f64>,
}

pub fn random_svm_problem(rng: &mut impl Rng, n: usize) -> SvmProblem {
    let dim = rng.random_range(2..=4);
    let gamma = rng.random_range(0.3..1.5);
    let point = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    let w: Vec<f64> = point(rng);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| point(rng)).collect();
    let mut labels: Vec<f64> = pts
        .iter()
        .map(|x| {
            let s: f64 =
                x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.5..0.5);
            if s > 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    labels[0] = 1.0;
    labels[1] = -1.0;
    let test: Vec<Vec<f64>> = (0..20).map(|_| point(rng)).collect();
    let rbf = |a: &[f64], b: &[f64]| {
        (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
    };
    let kernel = DMatrix::from_fn(n, n, |i, j| rbf(&pts[i], &pts[j]));
    let test_rows = DMatrix::from_fn(test.len(), n, |i, j| rbf(&test[i], &pts[j]));
    let c = [0.1, 1.0, 10.0, 100.0][rng.random_range(0..4)];
    SvmProblem {
        kernel,
        labels,
        c,
        test_rows,
    }
}

/// Exact solution of the C-SVM dual, used as an independent reference.
pub struct QpSolution {
    pub alpha: DVector<f64>,
    pub bias: f64,
    pub objective: f64,
    /// Largest KKT violation of the returned point.
    pub kkt_violation: f64,
}

impl QpSolution {
    pub fn decision(&self, k_row: &[f64], labels: &[f64]) -> f64 {
        (0..labels.len())
            .map(|i| self.alpha[i] * labels[i] * k_row[i])
            .sum::<f64>()
            + self.bias
    }
}

fn dual_objective(q: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    0.5 * a.dot(&(q * a)) - a.sum()
}

/// Log-barrier interior point on `min ½aᵀQa − Σa, yᵀa = 0, 0 ≤ a ≤ C`,
/// then an exact solve of the KKT system on the identified free set.
pub fn solve_dual_qp(k: &DMatrix<f64>, y: &[f64], c: f64) -> QpSolution {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);

    // strictly feasible start
    let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
    let neg = n as f64 - pos;
    let mass = 0.5 * c * pos.min(neg);
    let mut a = DVector::from_fn(n, |i, _| if y[i] > 0.0 { mass / pos } else { mass / neg });

    let barrier = |a: &DVector<f64>, t: f64| -> f64 {
        if a.iter().any(|&x| x <= 0.0 || x >= c) {
            return f64::INFINITY;
        }
        t * dual_objective(&q, a) - a.iter().map(|&x| x.ln() + (c - x).ln()).sum::<f64>()
    };
    let mut t = 1.0;
    while t < 1e14 {
        for _ in 0..200 {
            let g = (&q * &a).add_scalar(-1.0) * t
                + DVector::from_fn(n, |i, _| -1.0 / a[i] + 1.0 / (c - a[i]));
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&(&q * t));
            for i in 0..n {
                kkt[(i, i)] += 1.0 / (a[i] * a[i]) + 1.0 / ((c - a[i]) * (c - a[i]));
                kkt[(i, n)] = y[i];
                kkt[(n, i)] = y[i];
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(-&g));
            let Some(sol) = kkt.lu().solve(&rhs) else {
                break;
            };
            let dx = sol.rows(0, n).into_owned();
            let decrement = -g.dot(&dx);
            if decrement / 2.0 < 1e-14 {
                break;
            }
            let f0 = barrier(&a, t);
            let mut s = 1.0;
            while barrier(&(&a + &dx * s), t) > f0 - 0.25 * s * decrement && s > 1e-20 {
                s *= 0.5;
            }
            a += &dx * s;
        }
        t *= 10.0;
    }

    // polish: snap near-bound variables, solve exactly for the rest
    let snap = 1e-7 * c;
    let mut alpha = a.map(|x| {
        if x < snap {
            0.0
        } else if x > c - snap {
            c
        } else {
            x
        }
    });
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0 && alpha[i] < c).collect();
    let mut bias = f64::NAN;
    if !free.is_empty() {
        let m = free.len();
        let mut sys = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            let mut fixed = 0.0;
            for j in 0..n {
                if !free.contains(&j) {
                    fixed += q[(i, j)] * alpha[j];
                }
            }
            for (s, &j) in free.iter().enumerate() {
                sys[(r, s)] = q[(i, j)];
            }
            sys[(r, m)] = y[i];
            sys[(m, r)] = y[i];
            rhs[r] = 1.0 - fixed;
        }
        rhs[m] = -(0..n)
            .filter(|j| !free.contains(j))
            .map(|j| y[j] * alpha[j])
            .sum::<f64>();
        if let Some(sol) = sys.lu().solve(&rhs) {
            if free
                .iter()
                .enumerate()
                .all(|(r, _)| sol[r] > 0.0 && sol[r] < c)
            {
                for (r, &i) in free.iter().enumerate() {
                    alpha[i] = sol[r];
                }
                bias = sol[m];
            }
        }
    }
    if bias.is_nan() {
        // no free variable: any b in the KKT interval; take its midpoint
        let qa = &q * &alpha;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            // margin (Qα)_i + y_i b is ≥ 1 at the lower bound, ≤ 1 at C
            let r = 1.0 - qa[i];
            match (alpha[i] == 0.0, y[i] > 0.0) {
                (true, true) => lo = lo.max(r),
                (true, false) => hi = hi.min(-r),
                (false, true) => hi = hi.min(r),
                (false, false) => lo = lo.max(-r),
            }
        }
        bias = 0.5 * (lo + hi);
    }

    let kkt_violation = kkt_violation(&q, &yv, &alpha, bias, c);
    QpSolution {
        objective: dual_objective(&q, &alpha),
        alpha,
        bias,
        kkt_violation,
    }
}

fn kkt_violation(
    q: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: &DVector<f64>,
    bias: f64,
    c: f64,
) -> f64 {
    let qa = q * alpha;
    let mut worst = y.dot(alpha).abs();
    for i in 0..alpha.len() {
        // margin y_i f(x_i) = (Qα)_i + y_i b
        let margin = qa[i] + y[i] * bias;
        let v = if alpha[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
        if alpha[i] < 0.0 || alpha[i] > c {
            worst = worst.max(f64::INFINITY);
        }
    }
    worst
}
