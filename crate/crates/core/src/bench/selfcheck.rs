use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::featuremap::{prepare_state, FeatureMapKind, FeatureMapSpec};
use crate::oracle;
use crate::preprocess::{box_cox_log_likelihood, fit_rescaler, FittedStats, RescaleMethod};
use crate::qka::{kernel_entry_lambda, CovariantKernelSpec};
use crate::qkernel::{self, GramMatrix, KernelMode};
use crate::svm;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, bound: f64) -> CheckResult {
    CheckResult { name, passed: value <= bound, detail: format!("max error {value:.3e} (bound {bound:.0e})") }
}

fn circuits(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for kind in FeatureMapKind::ALL {
        for n in 1..=4 {
            for _ in 0..5 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let spec = FeatureMapSpec::new(kind, n)?;
                let fast = prepare_state(&spec, &x)?;
                let dense = oracle::dense_feature_state(&spec, &x, None);
                for (a, b) in fast.amplitudes().iter().zip(dense.iter()) {
                    worst = worst.max((a - b).norm());
                }
            }
        }
    }
    Ok(check("feature-map circuits vs dense matrices", worst, 1e-12))
}

fn kernels(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let spec = FeatureMapSpec::new(FeatureMapKind::Zz, n)?;
        let cov = CovariantKernelSpec::new(spec);
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let plain = qkernel::kernel_entry(&spec, &x, &y, KernelMode::Exact)?;
            worst = worst.max((plain - oracle::dense_kernel(&spec, &x, &y, None)).abs());
            let aligned = kernel_entry_lambda(&cov, &lambda, &x, &y, KernelMode::Exact)?;
            worst = worst.max((aligned - oracle::dense_kernel(&spec, &x, &y, Some(&lambda))).abs());
        }
    }
    Ok(check("kernel entries vs dense overlaps", worst, 1e-12))
}

fn gram_psd(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let spec = FeatureMapSpec::new(FeatureMapKind::Zz, 3)?;
    let xs: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let min = qkernel::gram(&spec, &rows, KernelMode::Exact)?.min_eigenvalue()?;
    Ok(check("exact Gram matrix is positive semidefinite", (-min).max(0.0), 1e-10))
}

fn smo(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let n = rng.random_range(4..=8);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        y.rotate_left(rng.random_range(0..n));
        let rows: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let k: GramMatrix = svm::ClassicalKernel::Rbf { sigma: 0.7 }.gram(&rows)?;
        let model = svm::smo_train(&k, &y, 1.0, svm::DEFAULT_TOL)?;
        let dense = DMatrix::from_fn(n, n, |i, j| k.get(i, j));
        let (_, obj) = oracle::projected_gradient_dual(&dense, &y, 1.0, 1e-8);
        worst = worst.max((model.dual_objective - obj).abs() / obj.abs().max(1e-12));
    }
    Ok(check("SMO dual objective vs projected-gradient QP", worst, 1e-4))
}

fn box_cox(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let data: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0f64..1.5).exp()).collect();
    let x = ndarray::Array2::from_shape_vec((50, 1), data.clone()).expect("shape");
    let params = fit_rescaler(RescaleMethod::BoxCox, x.view())?;
    let FittedStats::Power { lambda } = params.stats else { unreachable!("boxcox fits lambdas") };
    let grid = (0..=10_000)
        .map(|k| -5.0 + k as f64 * 1e-3)
        .max_by(|a, b| box_cox_log_likelihood(&data, *a).total_cmp(&box_cox_log_likelihood(&data, *b)))
        .expect("non-empty grid");
    Ok(check("Box-Cox lambda vs likelihood grid scan", (lambda[0] - grid).abs(), 1e-3))
}

/// Runs the reference-implementation comparisons on small random problems.
pub fn selfcheck(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![circuits(&mut rng)?, kernels(&mut rng)?, gram_psd(&mut rng)?, smo(&mut rng)?, box_cox(&mut rng)?])
}
