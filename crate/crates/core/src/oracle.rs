//! Slow reference computations used by `selfcheck` and the test suites.
//!
//! Nothing here shares a code path with the fast engines: circuits are built
//! as explicit dense `2^n x 2^n` matrices, phases by enumerating every
//! subset `S`, and SVM duals by accelerated projected gradient.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::featuremap::{phi_pair, phi_single, FeatureMapKind, FeatureMapSpec};

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Explicit `H (x) ... (x) H`.
pub fn dense_hadamard(n: usize) -> DMatrix<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = DMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
    let mut m = DMatrix::from_element(1, 1, c(1.0));
    for _ in 0..n {
        m = kron(&m, &h);
    }
    m
}

/// Explicit `diag(exp(i phases))`.
pub fn dense_diagonal(phases: &[f64]) -> DMatrix<Complex64> {
    let d: Vec<Complex64> = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
    DMatrix::from_diagonal(&DVector::from_vec(d))
}

/// Phase of every basis state by summing `phi_S prod_{i in S} z_i(b)` over
/// every subset `S` of size one or two, enumerated as bitmasks.
pub fn subset_phases(kind: FeatureMapKind, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let dim = 1usize << n;
    (0..dim)
        .map(|b| {
            let mut total = 0.0;
            for subset in 1usize..dim {
                let members: Vec<usize> = (0..n).filter(|i| subset >> i & 1 == 1).collect();
                let angle = match members.as_slice() {
                    [i] => phi_single(kind, x[*i]),
                    [i, j] => phi_pair(kind, x[*i], x[*j]).expect("oracle encoding"),
                    _ => continue,
                };
                let parity = members.iter().filter(|&&i| b >> i & 1 == 1).count();
                total += if parity % 2 == 0 { angle } else { -angle };
            }
            total
        })
        .collect()
}

/// Dense `Ry(theta)` on one qubit.
pub fn dense_ry(theta: f64) -> DMatrix<Complex64> {
    let (s, co) = (theta / 2.0).sin_cos();
    DMatrix::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)])
}

/// `Ry(lambda_{n-1}) (x) ... (x) Ry(lambda_0)`; qubit 0 is the least
/// significant factor.
pub fn dense_fiducial_layer(lambda: &[f64]) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(1, 1, c(1.0));
    for &theta in lambda.iter().rev() {
        m = kron(&m, &dense_ry(theta));
    }
    m
}

/// Full circuit unitary `(D(x) H^n)^reps` as a dense matrix.
pub fn dense_feature_unitary(spec: &FeatureMapSpec, x: &[f64]) -> DMatrix<Complex64> {
    let n = spec.n_qubits;
    let h = dense_hadamard(n);
    let d = dense_diagonal(&subset_phases(spec.kind, x));
    let block = &d * &h;
    let mut u = DMatrix::identity(1 << n, 1 << n);
    for _ in 0..spec.reps {
        u = &block * u;
    }
    u
}

/// `U(x) U_lambda |0^n>` (with `lambda = None` meaning no fiducial layer).
pub fn dense_feature_state(spec: &FeatureMapSpec, x: &[f64], lambda: Option<&[f64]>) -> DVector<Complex64> {
    let dim = 1usize << spec.n_qubits;
    let mut zero = DVector::from_element(dim, c(0.0));
    zero[0] = c(1.0);
    let start = match lambda {
        Some(l) => dense_fiducial_layer(l) * zero,
        None => zero,
    };
    dense_feature_unitary(spec, x) * start
}

/// `|<0| U_l^† U(x)^† U(y) U_l |0>|^2` from dense matrices.
pub fn dense_kernel(spec: &FeatureMapSpec, x: &[f64], y: &[f64], lambda: Option<&[f64]>) -> f64 {
    let a = dense_feature_state(spec, x, lambda);
    let b = dense_feature_state(spec, y, lambda);
    a.dotc(&b).norm_sqr()
}

/// Euclidean projection onto `{0 <= a_i <= c, sum y_i a_i = 0}` by bisection
/// on the multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - mu * yi).clamp(0.0, c))
            .collect()
    };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Binary SVM dual `max sum a - 1/2 a^T Q a`, `Q_ij = y_i y_j K_ij`, solved by
/// FISTA with projection, stopping when the iterate moves less than `tol`.
/// Returns `(alpha, objective)`.
pub fn projected_gradient_dual(k: &DMatrix<f64>, y: &[f64], c: f64, tol: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lipschitz = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lipschitz;
    let objective = |a: &[f64]| -> f64 {
        let av = DVector::from_column_slice(a);
        a.iter().sum::<f64>() - 0.5 * (av.transpose() * &q * &av)[(0, 0)]
    };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let zv = DVector::from_column_slice(&z);
        let grad = DVector::from_element(n, 1.0) - &q * zv;
        let ascent: Vec<f64> = z.iter().zip(grad.iter()).map(|(zi, g)| zi + step * g).collect();
        let next = project(&ascent, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        z = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        alpha = next;
        t = t_next;
        if moved < tol {
            break;
        }
    }
    let obj = objective(&alpha);
    (alpha, obj)
}
