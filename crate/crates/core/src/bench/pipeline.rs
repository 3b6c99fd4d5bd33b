use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, ReducerKind};
use crate::error::{Error, Result};
use crate::featuremap::{FeatureMapKind, FeatureMapSpec};
use crate::preprocess::{
    apply_rescaler, fit_rescaler, forest_importances, select_top_k, tree_importances, ForestConfig, ImportanceReport,
    Lda, Pca, RescalerParams, TreeConfig,
};
use crate::qka::{self, binary_reduction, BinaryTarget, CovariantKernelSpec, QkaConfig, QkaResult};
use crate::qkernel::{self, entry_seed, GramMatrix, KernelMode};
use crate::svm::{self, ClassicalKernel, OvoModel};

/// Fitted dimensionality reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedReducer {
    None,
    Select { features: Vec<usize>, report: ImportanceReport },
    Pca(Pca),
    Lda(Lda),
}

/// Everything preprocessing learns from its training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPrep {
    pub rescaler: RescalerParams,
    pub reducer: FittedReducer,
}

impl FittedPrep {
    pub fn fit(cfg: &ExperimentConfig, x: ArrayView2<f64>, y: &[usize]) -> Result<FittedPrep> {
        let rescaler = fit_rescaler(cfg.rescaler, x)?;
        let scaled = apply_rescaler(&rescaler, x)?;
        let k = cfg.reducer.k;
        let reducer = match cfg.reducer.kind {
            ReducerKind::None => FittedReducer::None,
            ReducerKind::SelectTree => {
                let report = tree_importances(scaled.view(), y, &TreeConfig { seed: cfg.seed, ..TreeConfig::default() })?;
                FittedReducer::Select { features: select_top_k(&report, k)?, report }
            }
            ReducerKind::SelectForest => {
                let report =
                    forest_importances(scaled.view(), y, &ForestConfig { seed: cfg.seed, ..ForestConfig::default() })?;
                FittedReducer::Select { features: select_top_k(&report, k)?, report }
            }
            ReducerKind::Pca => FittedReducer::Pca(Pca::fit(scaled.view(), k)?),
            ReducerKind::Lda => FittedReducer::Lda(Lda::fit(scaled.view(), y, k)?),
        };
        Ok(FittedPrep { rescaler, reducer })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let scaled = apply_rescaler(&self.rescaler, x)?;
        match &self.reducer {
            FittedReducer::None => Ok(scaled),
            FittedReducer::Select { features, .. } => Ok(scaled.select(ndarray::Axis(1), features)),
            FittedReducer::Pca(p) => p.transform(scaled.view()),
            FittedReducer::Lda(l) => l.transform(scaled.view()),
        }
    }
}

pub(crate) fn row_slices(x: &Array2<f64>) -> Vec<&[f64]> {
    x.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect()
}

/// The kernel a model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    Classical { kernel: ClassicalKernel },
    Quantum { spec: FeatureMapSpec },
    Trained { spec: CovariantKernelSpec, lambda: Vec<f64> },
}

/// Kernel, training Gram matrix and alignment result for one training set.
pub struct TrainKernel {
    pub choice: KernelChoice,
    pub gram: GramMatrix,
    pub qka: Option<QkaResult>,
}

fn sampled_mode(cfg: &ExperimentConfig, stream: usize, role: usize) -> KernelMode {
    match cfg.shots {
        Some(shots) => KernelMode::Sampled { shots, seed: entry_seed(cfg.seed, stream, role) },
        None => KernelMode::Exact,
    }
}

/// Builds the training kernel. `stream` separates the sampling seeds of
/// different folds.
pub fn train_kernel(cfg: &ExperimentConfig, x: &Array2<f64>, y: &[usize], stream: usize) -> Result<TrainKernel> {
    let x = x.as_standard_layout();
    let rows: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    let d = x.ncols();
    let mode = sampled_mode(cfg, stream, 0);
    let (choice, gram, qka) = match cfg.algorithm {
        Algorithm::Classical(kind) => {
            let kernel = ClassicalKernel::with_defaults(kind, &rows);
            (KernelChoice::Classical { kernel }, kernel.gram(&rows)?, None)
        }
        Algorithm::Quantum(kind) => {
            let spec = FeatureMapSpec::with_reps(kind, d, cfg.reps)?;
            (KernelChoice::Quantum { spec }, qkernel::gram(&spec, &rows, mode)?, None)
        }
        Algorithm::QuantumTraining => {
            let spec = CovariantKernelSpec::new(FeatureMapSpec::with_reps(FeatureMapKind::Zz, d, cfg.reps)?);
            let qcfg = cfg.qka.unwrap_or(QkaConfig { svm_c: cfg.svm_c, seed: cfg.seed, ..QkaConfig::default() });
            let (idx, yb) = binary_reduction(y, BinaryTarget::RarestVsRest)?;
            let sub: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
            let result = qka::spsa_train(&spec, &sub, &yb, &qcfg)?;
            let gram = qka::gram_lambda(&spec, &result.lambda_star, &rows, mode)?;
            (KernelChoice::Trained { spec, lambda: result.lambda_star.clone() }, gram, Some(result))
        }
    };
    let gram = if cfg.psd_clip && matches!(mode, KernelMode::Sampled { .. }) { qkernel::psd_clip(&gram)? } else { gram };
    Ok(TrainKernel { choice, gram, qka })
}

/// A trained multiclass classifier together with its training rows.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub choice: KernelChoice,
    pub cross_mode: KernelMode,
    pub train: Array2<f64>,
    pub ovo: OvoModel,
    pub qka: Option<QkaResult>,
}

impl FittedModel {
    pub fn fit(cfg: &ExperimentConfig, x: &Array2<f64>, y: &[usize], stream: usize) -> Result<FittedModel> {
        let tk = train_kernel(cfg, x, y, stream)?;
        let ovo = svm::ovo_train(&tk.gram, y, cfg.svm_c, svm::DEFAULT_TOL)?;
        Ok(FittedModel {
            choice: tk.choice,
            cross_mode: sampled_mode(cfg, stream, 1),
            train: x.as_standard_layout().into_owned(),
            ovo,
            qka: tk.qka,
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        if x.ncols() != self.train.ncols() {
            return Err(Error::Contract(format!(
                "model trained on {} features, got {}",
                self.train.ncols(),
                x.ncols()
            )));
        }
        let x = x.as_standard_layout();
        let a: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
        let b = row_slices(&self.train);
        let cross = match &self.choice {
            KernelChoice::Classical { kernel } => kernel.cross_gram(&a, &b)?,
            KernelChoice::Quantum { spec } => qkernel::cross_gram(spec, &a, &b, self.cross_mode)?,
            KernelChoice::Trained { spec, lambda } => qka::cross_gram_lambda(spec, lambda, &a, &b, self.cross_mode)?,
        };
        svm::ovo_predict(&self.ovo, &cross)
    }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}
