use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use super::stats::chi_square_quantile;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.975;

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisOutcome {
    pub kept: Vec<usize>,
    /// Squared distance of every input row.
    pub distances: Vec<f64>,
    pub threshold: f64,
}

/// Keeps rows whose squared Mahalanobis distance to the sample mean is at
/// most the chi-square quantile at `alpha` with `d` degrees of freedom.
pub fn mahalanobis_filter(x: ArrayView2<f64>, alpha: f64) -> Result<MahalanobisOutcome> {
    let (n, d) = x.dim();
    if n <= d {
        return Err(Error::Contract(format!("Mahalanobis filter needs more samples ({n}) than features ({d})")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = DMatrix::from_fn(n, d, |i, j| x[(i, j)]);
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    let ridge = 1e-6 * cov.trace() / d as f64;
    for j in 0..d {
        cov[(j, j)] += ridge;
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is singular even after regularization".into()))?;
    let distances: Vec<f64> = (0..n)
        .map(|i| {
            let r = DVector::from_iterator(d, centered.row(i).iter().copied());
            r.dot(&chol.solve(&r))
        })
        .collect();
    let threshold = chi_square_quantile(alpha, d)?;
    let kept = (0..n).filter(|&i| distances[i] <= threshold).collect();
    Ok(MahalanobisOutcome { kept, distances, threshold })
}
