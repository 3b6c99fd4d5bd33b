use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descending eigenpairs of a symmetric matrix.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&v, c)| (v, c.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

fn to_dmatrix(x: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

fn project(x: ArrayView2<f64>, mean: &[f64], directions: &[Vec<f64>]) -> Result<Array2<f64>> {
    if x.ncols() != mean.len() {
        return Err(Error::Contract(format!("projection fitted on {} features, got {}", mean.len(), x.ncols())));
    }
    Ok(Array2::from_shape_fn((x.nrows(), directions.len()), |(i, k)| {
        directions[k].iter().enumerate().map(|(j, w)| (x[(i, j)] - mean[j]) * w).sum()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One orthonormal component per row.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    pub fn fit(x: ArrayView2<f64>, m: usize) -> Result<Pca> {
        let (n, d) = x.dim();
        if m == 0 || m > n.min(d) {
            return Err(Error::Config(format!("PCA needs 1 <= m <= {}, got {m}", n.min(d))));
        }
        if n < 2 {
            return Err(Error::Contract("PCA needs at least 2 samples".into()));
        }
        let data = to_dmatrix(x);
        let mean: Vec<f64> = data.row_mean().iter().copied().collect();
        let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let total = cov.trace();
        let pairs = sorted_eigen(cov);
        let mut components = Vec::with_capacity(m);
        let mut explained_variance = Vec::with_capacity(m);
        for (value, mut vec) in pairs.into_iter().take(m) {
            fix_sign(&mut vec);
            components.push(vec.iter().copied().collect());
            explained_variance.push(value.max(0.0));
        }
        let explained_variance_ratio =
            explained_variance.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
        Ok(Pca { mean, components, explained_variance, explained_variance_ratio })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        project(x, &self.mean, &self.components)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub mean: Vec<f64>,
    /// Unit-norm discriminant directions, one per row.
    pub directions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl Lda {
    /// Fisher discriminant: top `m` solutions of `S_b v = l S_w v`.
    pub fn fit(x: ArrayView2<f64>, y: &[usize], m: usize) -> Result<Lda> {
        let (n, d) = x.dim();
        if y.len() != n {
            return Err(Error::Contract(format!("{n} rows but {} labels", y.len())));
        }
        let mut classes = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if m == 0 || m + 1 > classes.len() || m > d {
            return Err(Error::Config(format!(
                "LDA needs 1 <= m <= min(n_classes - 1, n_features) = {}, got {m}",
                (classes.len().saturating_sub(1)).min(d)
            )));
        }
        let data = to_dmatrix(x);
        let mean = data.row_mean().transpose();
        let mut sw = DMatrix::zeros(d, d);
        let mut sb = DMatrix::zeros(d, d);
        for &c in &classes {
            let rows: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
            let nc = rows.len() as f64;
            let mc = rows.iter().fold(DVector::zeros(d), |acc, &i| acc + data.row(i).transpose()) / nc;
            for &i in &rows {
                let r = data.row(i).transpose() - &mc;
                sw += &r * r.transpose();
            }
            let diff = &mc - &mean;
            sb += nc * &diff * diff.transpose();
        }
        let trace = sw.trace();
        let ridge = 1e-6 * trace / d as f64;
        for j in 0..d {
            sw[(j, j)] += ridge;
        }
        let chol = sw
            .cholesky()
            .ok_or_else(|| Error::Numeric("within-class scatter is singular after regularization".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("within-class scatter factor is singular".into()))?;
        let mut reduced = &l_inv * sb * l_inv.transpose();
        reduced = (&reduced + reduced.transpose()) * 0.5;
        let mut directions = Vec::with_capacity(m);
        let mut eigenvalues = Vec::with_capacity(m);
        for (value, u) in sorted_eigen(reduced).into_iter().take(m) {
            let mut v = l_inv.transpose() * u;
            let norm = v.norm();
            v /= norm;
            fix_sign(&mut v);
            directions.push(v.iter().copied().collect());
            eigenvalues.push(value);
        }
        Ok(Lda { mean: mean.iter().copied().collect(), directions, eigenvalues })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        project(x, &self.mean, &self.directions)
    }
}
