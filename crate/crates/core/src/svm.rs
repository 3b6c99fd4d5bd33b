//! Classical kernels, a soft-margin SVM dual solver over precomputed kernel
//! matrices (SMO), and all-pairs multiclass voting.
//!
//! The solver only ever sees a [`GramMatrix`], so quantum and classical
//! kernels go through identical training code.

use std::collections::BTreeSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qkernel::{GramMatrix, KernelMode};

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-6;
const TAU: f64 = 1e-12;
const MIN_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKernelKind {
    Linear,
    Rbf,
    Poly,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassicalKernel {
    /// `x . y`
    Linear,
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Rbf { sigma: f64 },
    /// `(x . y + a)^degree`
    Poly { a: f64, degree: u32 },
    /// `tanh(a (x . y) - b)`
    Sigmoid { a: f64, b: f64 },
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl ClassicalKernel {
    /// Kernel with data-dependent defaults: `sigma^2 = d Var(X) / 2` for rbf,
    /// `a = 0, degree = 3` for poly, `a = 1/d, b = 0` for sigmoid. `Var(X)` is
    /// the population variance over every entry of `X`.
    pub fn with_defaults(kind: ClassicalKernelKind, rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(1, |r| r.len()).max(1) as f64;
        match kind {
            ClassicalKernelKind::Linear => ClassicalKernel::Linear,
            ClassicalKernelKind::Rbf => {
                let count = rows.iter().map(|r| r.len()).sum::<usize>().max(1) as f64;
                let mean = rows.iter().flat_map(|r| r.iter()).sum::<f64>() / count;
                let var = rows
                    .iter()
                    .flat_map(|r| r.iter())
                    .map(|v| (v - mean).powi(2))
                    .sum::<f64>()
                    / count;
                let var = if var > 0.0 { var } else { 1.0 };
                ClassicalKernel::Rbf {
                    sigma: (d * var / 2.0).sqrt(),
                }
            }
            ClassicalKernelKind::Poly => ClassicalKernel::Poly { a: 0.0, degree: 3 },
            ClassicalKernelKind::Sigmoid => ClassicalKernel::Sigmoid { a: 1.0 / d, b: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassicalKernel::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("rbf sigma must be positive, got {sigma}")))
            }
            ClassicalKernel::Poly { degree: 0, .. } => {
                Err(Error::Config("poly degree must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            ClassicalKernel::Linear => dot(x, y),
            ClassicalKernel::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            ClassicalKernel::Poly { a, degree } => (dot(x, y) + a).powi(degree as i32),
            ClassicalKernel::Sigmoid { a, b } => (a * dot(x, y) - b).tanh(),
        }
    }

    pub fn gram(&self, rows: &[&[f64]]) -> Result<GramMatrix> {
        self.validate()?;
        let n = rows.len();
        let mut entries = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = self.eval(rows[i], rows[j]);
                entries[[i, j]] = v;
                entries[[j, i]] = v;
            }
        }
        GramMatrix::new(entries, KernelMode::Exact, true)
    }

    pub fn cross_gram(&self, a: &[&[f64]], b: &[&[f64]]) -> Result<GramMatrix> {
        self.validate()?;
        let entries = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| self.eval(a[i], b[j]));
        GramMatrix::new(entries, KernelMode::Exact, false)
    }
}

/// A trained binary classifier `f(t) = sum_i alpha_y[i] K(x_i, t) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    /// `alpha_i * y_i` for each support vector.
    pub alpha_y: Vec<f64>,
    /// Indices of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub c: f64,
    /// Optimal value of `sum a - 1/2 a^T Q a`.
    pub dual_objective: f64,
    pub iterations: usize,
}

fn check_binary_labels(labels: &[f64]) -> Result<()> {
    if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::Contract(format!("label {i} is {}, expected +1 or -1", labels[i])));
    }
    let pos = labels.iter().any(|&y| y > 0.0);
    let neg = labels.iter().any(|&y| y < 0.0);
    if !(pos && neg) {
        return Err(Error::Contract("binary SVM needs both +1 and -1 labels".into()));
    }
    Ok(())
}

/// Solves the soft-margin dual
/// `max sum a_i - 1/2 sum a_i a_j y_i y_j K_ij`, `0 <= a_i <= c`, `sum a_i y_i = 0`
/// by sequential minimal optimization with maximal-violating-pair selection.
/// Stops once the violation gap is at most `tol`, which bounds every KKT
/// residual of the returned model by `tol`.
pub fn smo_train(k: &GramMatrix, labels: &[f64], c: f64, tol: f64) -> Result<BinaryModel> {
    let n = labels.len();
    if !k.symmetric || k.size_a() != n {
        return Err(Error::Contract(format!(
            "SMO needs a symmetric {n}x{n} kernel, got {}x{} (symmetric = {})",
            k.size_a(),
            k.size_b(),
            k.symmetric
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    check_binary_labels(labels)?;

    let kk = &k.entries;
    let y = labels;
    let q = |i: usize, j: usize| y[i] * y[j] * kk[[i, j]];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (10 * n * n).max(MIN_ITERATIONS);

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let (mut m_up, mut m_low);
    loop {
        // i: maximal -y G over the up set; j: minimal -y G over the low set.
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        m_up = f64::NEG_INFINITY;
        m_low = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > m_up {
                m_up = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < m_low {
                m_low = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || m_up - m_low <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence(format!(
                "SMO stopped after {iterations} updates with KKT gap {:e} (tol {tol:e})",
                m_up - m_low
            )));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kk[[i, i]] + kk[[j, j]] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
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
            let mut quad = kk[[i, i]] + kk[[j, j]] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
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

    // Bias: mean of -y G over free vectors; otherwise the middle of the
    // feasible interval [m_low, m_up].
    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| -y[t] * grad[t])
        .collect();
    let bias = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else if m_up.is_finite() && m_low.is_finite() {
        0.5 * (m_up + m_low)
    } else if m_up.is_finite() {
        m_up
    } else {
        m_low
    };

    let dual_objective = 0.5 * (0..n).map(|t| alpha[t] * (1.0 - grad[t])).sum::<f64>();
    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let alpha_y = support_indices.iter().map(|&t| alpha[t] * y[t]).collect();
    Ok(BinaryModel {
        alpha_y,
        support_indices,
        bias,
        c,
        dual_objective,
        iterations,
    })
}

impl BinaryModel {
    /// Multiplier `alpha_i` of every training point (zero for non-support).
    pub fn dense_alpha(&self, n_train: usize) -> Vec<f64> {
        let mut a = vec![0.0; n_train];
        for (&i, &ay) in self.support_indices.iter().zip(&self.alpha_y) {
            a[i] = ay.abs();
        }
        a
    }

    /// Largest violation of the KKT conditions on the training set:
    /// `y f >= 1` at `alpha = 0`, `y f <= 1` at `alpha = c`, `y f = 1` otherwise.
    pub fn kkt_residual(&self, k: &GramMatrix, labels: &[f64]) -> f64 {
        let n = labels.len();
        let alpha = self.dense_alpha(n);
        let mut worst: f64 = 0.0;
        for t in 0..n {
            let row: Vec<f64> = (0..n).map(|s| k.get(t, s)).collect();
            let f = self.decision(&row);
            let margin = labels[t] * f;
            let violation = if alpha[t] <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if alpha[t] >= self.c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(violation);
        }
        worst
    }

    fn decision(&self, k_row: &[f64]) -> f64 {
        self.support_indices
            .iter()
            .zip(&self.alpha_y)
            .map(|(&i, &ay)| ay * k_row[i])
            .sum::<f64>()
            + self.bias
    }
}

/// Decision value and `+1/-1` label for one sample; `k_row[i]` is the kernel
/// against training sample `i`. A zero decision is labelled `+1`.
pub fn predict_binary(model: &BinaryModel, k_row: &[f64]) -> Result<(f64, i8)> {
    if let Some(&max) = model.support_indices.iter().max() {
        if max >= k_row.len() {
            return Err(Error::Contract(format!(
                "kernel row has {} entries but support index {max} is needed",
                k_row.len()
            )));
        }
    }
    let decision = model.decision(k_row);
    Ok((decision, if decision >= 0.0 { 1 } else { -1 }))
}

/// Binary model for one class pair; `positive` gets label `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub positive: usize,
    pub negative: usize,
    /// Support indices refer to the full training set.
    pub model: BinaryModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoModel {
    pub classes: Vec<usize>,
    pub pair_models: Vec<PairModel>,
}

/// Trains one binary model per unordered class pair on the matching
/// sub-kernel. The lower class of each pair is the `+1` side.
pub fn ovo_train(k: &GramMatrix, labels: &[usize], c: f64, tol: f64) -> Result<OvoModel> {
    if k.size_a() != labels.len() || !k.symmetric {
        return Err(Error::Contract(format!(
            "OVO training needs a symmetric kernel over {} samples",
            labels.len()
        )));
    }
    let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::Data(format!(
            "one-vs-one needs at least two classes, found {}",
            classes.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = classes
        .iter()
        .enumerate()
        .flat_map(|(a, &p)| classes[a + 1..].iter().map(move |&q| (p, q)))
        .collect();
    let pair_models = pairs
        .par_iter()
        .map(|&(positive, negative)| {
            let idx: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == positive || labels[i] == negative)
                .collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if labels[i] == positive { 1.0 } else { -1.0 })
                .collect();
            let sub = k.select(&idx, &idx);
            let mut model = smo_train(&sub, &y, c, tol)
                .map_err(|e| e.at("pair model"))?;
            for s in model.support_indices.iter_mut() {
                *s = idx[*s];
            }
            Ok(PairModel {
                positive,
                negative,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvoModel {
        classes,
        pair_models,
    })
}

impl OvoModel {
    /// Majority vote over pair decisions for one sample. Ties go to the larger
    /// summed `|decision|` of the votes won, then to the lower class.
    pub fn vote(&self, k_row: &[f64]) -> Result<usize> {
        let mut votes = vec![0usize; self.classes.len()];
        let mut strength = vec![0.0f64; self.classes.len()];
        let slot = |class: usize| self.classes.binary_search(&class).expect("known class");
        for pm in &self.pair_models {
            let (d, label) = predict_binary(&pm.model, k_row)?;
            let winner = slot(if label > 0 { pm.positive } else { pm.negative });
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        let mut best = 0;
        for s in 1..self.classes.len() {
            if votes[s] > votes[best] || (votes[s] == votes[best] && strength[s] > strength[best]) {
                best = s;
            }
        }
        Ok(self.classes[best])
    }
}

/// Predicts every row of `k_cross` (test x train).
pub fn ovo_predict(model: &OvoModel, k_cross: &GramMatrix) -> Result<Vec<usize>> {
    (0..k_cross.size_a())
        .map(|r| {
            let row: Vec<f64> = k_cross.entries.row(r).to_vec();
            model.vote(&row)
        })
        .collect()
}
