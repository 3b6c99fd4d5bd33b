//! Quantum kernel alignment.
//!
//! The trainable kernel is `K_l(x, y) = |<0| U_l^† D(x)^† D(y) U_l |0>|^2`
//! where `D` is a base feature map and `U_l` puts qubit `i` through
//! `Ry(l_i)`. The angles are fitted by SPSA on the SVM dual objective.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremap::FeatureMapSpec;
use crate::qkernel::{cross_gram_circuit, gram_circuit, Circuit, GramMatrix, GramOptions, KernelMode};
use crate::statevec::Statevector;
use crate::svm;

/// Starting value of every rotation angle.
pub const LAMBDA_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariantKernelSpec {
    pub base: FeatureMapSpec,
}

impl CovariantKernelSpec {
    pub fn new(base: FeatureMapSpec) -> Self {
        Self { base }
    }

    /// One angle per qubit.
    pub fn lambda_dim(&self) -> usize {
        self.base.n_qubits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QkaConfig {
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub perturbation: f64,
    pub svm_c: f64,
    pub seed: u64,
}

impl Default for QkaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            learning_rate: 0.05,
            perturbation: 0.05,
            svm_c: svm::DEFAULT_C,
            seed: 0,
        }
    }
}

impl QkaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.perturbation > 0.0) || !(self.svm_c > 0.0) {
            return Err(Error::Config(format!(
                "QKA needs positive learning rate, perturbation and C, got {}, {}, {}",
                self.learning_rate, self.perturbation, self.svm_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkaResult {
    /// Trained angles, radians.
    pub lambda_star: Vec<f64>,
    /// Loss at the updated angles after each step.
    pub loss_history: Vec<f64>,
    pub initial_loss: f64,
}

/// `prod_i Ry(lambda_i) |0>`: amplitude of `b` is the product over qubits of
/// `cos(lambda_i / 2)` (bit clear) or `sin(lambda_i / 2)` (bit set).
pub fn fiducial_state(lambda: &[f64], n_qubits: usize) -> Result<Statevector> {
    if lambda.len() != n_qubits {
        return Err(Error::Contract(format!(
            "{} rotation angles for {n_qubits} qubits",
            lambda.len()
        )));
    }
    let mut amps = vec![Complex64::new(1.0, 0.0)];
    for &theta in lambda {
        let (s, c) = (theta / 2.0).sin_cos();
        // qubit i becomes the next most significant bit
        let mut next = Vec::with_capacity(amps.len() * 2);
        next.extend(amps.iter().map(|a| a * c));
        next.extend(amps.iter().map(|a| a * s));
        amps = next;
    }
    Statevector::from_amplitudes(amps)
}

/// Applies `prod_i Ry(-lambda_i)` to an arbitrary state.
pub fn apply_fiducial_adjoint(state: Statevector, lambda: &[f64]) -> Result<Statevector> {
    if lambda.len() != state.n_qubits() {
        return Err(Error::Contract(format!(
            "{} rotation angles for a {}-qubit state",
            lambda.len(),
            state.n_qubits()
        )));
    }
    let mut amps = state.amplitudes().to_vec();
    for (q, &theta) in lambda.iter().enumerate() {
        let (s, c) = (theta / 2.0).sin_cos();
        let bit = 1usize << q;
        for b in 0..amps.len() {
            if b & bit == 0 {
                let (a0, a1) = (amps[b], amps[b | bit]);
                // Ry(-t) = [[c, s], [-s, c]]
                amps[b] = a0 * c + a1 * s;
                amps[b | bit] = a1 * c - a0 * s;
            }
        }
    }
    Statevector::from_amplitudes(amps)
}

fn circuit<'a>(spec: &'a CovariantKernelSpec, lambda: &'a [f64]) -> Result<Circuit<'a>> {
    if lambda.len() != spec.lambda_dim() {
        return Err(Error::Contract(format!(
            "{} angles for a {}-qubit covariant kernel",
            lambda.len(),
            spec.lambda_dim()
        )));
    }
    Ok(Circuit {
        spec: &spec.base,
        lambda: Some(lambda),
    })
}

pub fn kernel_entry_lambda(
    spec: &CovariantKernelSpec,
    lambda: &[f64],
    x: &[f64],
    y: &[f64],
    mode: KernelMode,
) -> Result<f64> {
    let g = cross_gram_circuit(circuit(spec, lambda)?, &[x], &[y], mode, &GramOptions::default())?;
    Ok(g.get(0, 0))
}

pub fn gram_lambda(spec: &CovariantKernelSpec, lambda: &[f64], xs: &[&[f64]], mode: KernelMode) -> Result<GramMatrix> {
    gram_circuit(circuit(spec, lambda)?, xs, mode, &GramOptions::default())
}

pub fn cross_gram_lambda(
    spec: &CovariantKernelSpec,
    lambda: &[f64],
    a: &[&[f64]],
    b: &[&[f64]],
    mode: KernelMode,
) -> Result<GramMatrix> {
    cross_gram_circuit(circuit(spec, lambda)?, a, b, mode, &GramOptions::default())
}

/// Optimal SVM dual objective for kernel `k`, the quantity minimized over the
/// kernel parameters.
pub fn svc_loss(k: &GramMatrix, labels: &[f64], c: f64) -> Result<f64> {
    Ok(svm::smo_train(k, labels, c, svm::DEFAULT_TOL)?.dual_objective)
}

/// Which binary problem a multiclass label vector is reduced to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BinaryTarget {
    /// Rarest class (lowest label on ties) against everything else.
    #[default]
    RarestVsRest,
    /// Only samples of the two classes; `positive` becomes `+1`.
    Pair { positive: usize, negative: usize },
}

/// Returns `(sample indices, +1/-1 labels)` for the reduced problem.
pub fn binary_reduction(labels: &[usize], target: BinaryTarget) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Contract("kernel alignment needs two classes".into()));
    }
    match target {
        BinaryTarget::RarestVsRest => {
            let (&rare, _) = counts
                .iter()
                .min_by_key(|(&l, &c)| (c, l))
                .expect("non-empty");
            Ok((
                (0..labels.len()).collect(),
                labels.iter().map(|&l| if l == rare { 1.0 } else { -1.0 }).collect(),
            ))
        }
        BinaryTarget::Pair { positive, negative } => {
            if !counts.contains_key(&positive) || !counts.contains_key(&negative) || positive == negative {
                return Err(Error::Config(format!(
                    "alignment pair ({positive}, {negative}) not present in the labels"
                )));
            }
            let idx: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == positive || labels[i] == negative)
                .collect();
            let y = idx.iter().map(|&i| if labels[i] == positive { 1.0 } else { -1.0 }).collect();
            Ok((idx, y))
        }
    }
}

/// SPSA over the fiducial angles with constant gains: each step draws a
/// Rademacher direction `d`, estimates
/// `g = (L(l + c d) - L(l - c d)) / (2c) * d` and sets `l <- l - lr g`.
pub fn spsa_train(spec: &CovariantKernelSpec, xs: &[&[f64]], labels: &[f64], cfg: &QkaConfig) -> Result<QkaResult> {
    cfg.validate()?;
    if xs.len() < 2 || xs.len() != labels.len() {
        return Err(Error::Contract(format!(
            "alignment needs >= 2 labelled samples, got {} samples and {} labels",
            xs.len(),
            labels.len()
        )));
    }
    if !(labels.iter().any(|&y| y > 0.0) && labels.iter().any(|&y| y < 0.0)) {
        return Err(Error::Contract("kernel alignment needs both +1 and -1 labels".into()));
    }
    let loss = |lambda: &[f64]| -> Result<f64> {
        let k = gram_lambda(spec, lambda, xs, KernelMode::Exact)?;
        svc_loss(&k, labels, cfg.svm_c)
    };

    let dim = spec.lambda_dim();
    let mut lambda = vec![LAMBDA_INIT; dim];
    let initial_loss = loss(&lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut loss_history = Vec::with_capacity(cfg.max_iterations);
    for _ in 0..cfg.max_iterations {
        let delta: Vec<f64> = (0..dim)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let plus: Vec<f64> = lambda.iter().zip(&delta).map(|(l, d)| l + cfg.perturbation * d).collect();
        let minus: Vec<f64> = lambda.iter().zip(&delta).map(|(l, d)| l - cfg.perturbation * d).collect();
        let (lp, lm) = rayon::join(|| loss(&plus), || loss(&minus));
        let slope = (lp? - lm?) / (2.0 * cfg.perturbation);
        for (l, d) in lambda.iter_mut().zip(&delta) {
            *l -= cfg.learning_rate * slope * d;
        }
        let current = loss(&lambda)?;
        if !current.is_finite() {
            return Err(Error::Numeric(format!("alignment loss became {current}")));
        }
        loss_history.push(current);
    }
    Ok(QkaResult {
        lambda_star: lambda,
        loss_history,
        initial_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featuremap::FeatureMapKind;
    use crate::oracle;
    use crate::qkernel::kernel_entry;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn zz(n: usize) -> CovariantKernelSpec {
        CovariantKernelSpec::new(FeatureMapSpec::new(FeatureMapKind::Zz, n).unwrap())
    }

    #[test]
    fn fiducial_examples() {
        let s = fiducial_state(&[0.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(s, Statevector::zero_state(3).unwrap());
        let s = fiducial_state(&[PI], 1).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-15);
        assert!((s.amplitudes()[1].re - 1.0).abs() < 1e-15);
        let s = fiducial_state(&[PI / 2.0, PI / 2.0], 2).unwrap();
        for a in s.amplitudes() {
            assert!((a.re - 0.5).abs() < 1e-15 && a.im == 0.0);
        }
        assert!(matches!(fiducial_state(&[0.1], 2), Err(Error::Contract(_))));
    }

    #[test]
    fn fiducial_matches_dense_layer_and_adjoint_inverts() {
        let lambda = [0.3, -1.1, 2.0];
        let s = fiducial_state(&lambda, 3).unwrap();
        let mut e0 = nalgebra::DVector::from_element(8, Complex64::new(0.0, 0.0));
        e0[0] = Complex64::new(1.0, 0.0);
        let dense = oracle::dense_fiducial_layer(&lambda) * e0;
        for (a, b) in s.amplitudes().iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
        let back = apply_fiducial_adjoint(s, &lambda).unwrap();
        assert!((back.amplitudes()[0].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_angles_reduce_to_base_kernel() {
        let spec = zz(3);
        let x = [0.2, 0.5, -0.3];
        let y = [-0.7, 0.1, 0.9];
        let a = kernel_entry_lambda(&spec, &[0.0; 3], &x, &y, KernelMode::Exact).unwrap();
        let b = kernel_entry(&spec.base, &x, &y, KernelMode::Exact).unwrap();
        assert!((a - b).abs() < 1e-12);
        let s = kernel_entry_lambda(&spec, &[0.4, 0.2, 0.1], &x, &x, KernelMode::Exact).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let sampled = kernel_entry_lambda(&spec, &[0.4, 0.2, 0.1], &x, &x, KernelMode::Sampled { shots: 100, seed: 1 }).unwrap();
        assert_eq!(sampled, 1.0);
    }

    #[test]
    fn lambda_kernel_matches_dense_oracle() {
        let spec = zz(2);
        let lambda = [0.7, -0.4];
        let x = [0.3, 0.8];
        let y = [-0.2, 0.5];
        let fast = kernel_entry_lambda(&spec, &lambda, &x, &y, KernelMode::Exact).unwrap();
        let slow = oracle::dense_kernel(&spec.base, &x, &y, Some(&lambda));
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn angle_periodicity() {
        let spec = zz(2);
        let x = [0.3, 0.8];
        let y = [-0.2, 0.5];
        let base = kernel_entry_lambda(&spec, &[0.7, -0.4], &x, &y, KernelMode::Exact).unwrap();
        for shift in [2.0 * PI, 4.0 * PI] {
            let k = kernel_entry_lambda(&spec, &[0.7 + shift, -0.4], &x, &y, KernelMode::Exact).unwrap();
            assert!((k - base).abs() < 1e-12);
        }
    }

    #[test]
    fn svc_loss_identity_kernel() {
        let k = GramMatrix::new(Array2::eye(2), KernelMode::Exact, true).unwrap();
        assert!((svc_loss(&k, &[1.0, -1.0], 1e6).unwrap() - 1.0).abs() < 1e-9);
        assert!(svc_loss(&k, &[1.0, 1.0], 1.0).is_err());
        let k4 = GramMatrix::new(Array2::eye(4), KernelMode::Exact, true).unwrap();
        let loss = svc_loss(&k4, &[1.0, -1.0, 1.0, -1.0], 0.3).unwrap();
        assert!(loss <= 4.0 * 0.3 + 1e-12);
    }

    #[test]
    fn reductions() {
        let labels = [0, 1, 1, 2, 2, 2, 0];
        let (idx, y) = binary_reduction(&labels, BinaryTarget::RarestVsRest).unwrap();
        assert_eq!(idx.len(), 7);
        assert_eq!(y, vec![1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0]);
        let (idx, y) = binary_reduction(&labels, BinaryTarget::Pair { positive: 2, negative: 1 }).unwrap();
        assert_eq!(idx, vec![1, 2, 3, 4, 5]);
        assert_eq!(y, vec![-1.0, -1.0, 1.0, 1.0, 1.0]);
        assert!(binary_reduction(&[3, 3], BinaryTarget::RarestVsRest).is_err());
        assert!(binary_reduction(&labels, BinaryTarget::Pair { positive: 0, negative: 7 }).is_err());
    }

    fn toy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = vec![
            vec![0.1, 0.2],
            vec![0.3, 0.1],
            vec![0.2, 0.4],
            vec![0.4, 0.3],
            vec![1.9, 2.1],
            vec![2.2, 1.8],
            vec![2.0, 2.3],
            vec![2.4, 2.0],
        ];
        let y = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        (xs, y)
    }

    #[test]
    fn spsa_zero_iterations_and_determinism() {
        let (xs, y) = toy();
        let views: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let spec = zz(2);
        let cfg = QkaConfig {
            max_iterations: 0,
            ..Default::default()
        };
        let r = spsa_train(&spec, &views, &y, &cfg).unwrap();
        assert_eq!(r.lambda_star, vec![LAMBDA_INIT; 2]);
        assert!(r.loss_history.is_empty());

        let cfg = QkaConfig {
            seed: 17,
            ..Default::default()
        };
        let a = spsa_train(&spec, &views, &y, &cfg).unwrap();
        let b = spsa_train(&spec, &views, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_history.len(), 10);
        assert!(a.loss_history.iter().all(|l| l.is_finite()));
        assert!(spsa_train(&spec, &views, &[1.0; 8], &cfg).is_err());
    }
}
