use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremap::FeatureMapKind;
use crate::preprocess::RescaleMethod;
use crate::qka::QkaConfig;
use crate::statevec::MAX_QUBITS;
use crate::svm::ClassicalKernelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Classical(ClassicalKernelKind),
    Quantum(FeatureMapKind),
    /// Covariant kernel with trained fiducial angles over the ZZ map.
    QuantumTraining,
}

impl Algorithm {
    pub const ALL: [Algorithm; 12] = [
        Algorithm::Classical(ClassicalKernelKind::Linear),
        Algorithm::Classical(ClassicalKernelKind::Rbf),
        Algorithm::Classical(ClassicalKernelKind::Poly),
        Algorithm::Classical(ClassicalKernelKind::Sigmoid),
        Algorithm::Quantum(FeatureMapKind::Zz),
        Algorithm::Quantum(FeatureMapKind::Default),
        Algorithm::Quantum(FeatureMapKind::Suzuki8),
        Algorithm::Quantum(FeatureMapKind::Suzuki9),
        Algorithm::Quantum(FeatureMapKind::Suzuki10),
        Algorithm::Quantum(FeatureMapKind::Suzuki11),
        Algorithm::Quantum(FeatureMapKind::Suzuki12),
        Algorithm::QuantumTraining,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Classical(ClassicalKernelKind::Linear) => "svm_linear",
            Algorithm::Classical(ClassicalKernelKind::Rbf) => "svm_rbf",
            Algorithm::Classical(ClassicalKernelKind::Poly) => "svm_poly",
            Algorithm::Classical(ClassicalKernelKind::Sigmoid) => "svm_sigmoid",
            Algorithm::Quantum(kind) => kind.name(),
            Algorithm::QuantumTraining => "q_kernel_training",
        }
    }

    pub fn is_quantum(self) -> bool {
        !matches!(self, Algorithm::Classical(_))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    SelectTree,
    SelectForest,
    Pca,
    Lda,
    None,
}

impl ReducerKind {
    pub fn name(self) -> &'static str {
        match self {
            ReducerKind::SelectTree => "select_tree",
            ReducerKind::SelectForest => "select_forest",
            ReducerKind::Pca => "pca",
            ReducerKind::Lda => "lda",
            ReducerKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducerConfig {
    pub kind: ReducerKind,
    /// Output feature count; ignored by `none`.
    #[serde(default)]
    pub k: usize,
}

fn default_true() -> bool {
    true
}

fn default_label_column() -> String {
    "label".into()
}
fn default_reps() -> usize {
    2
}
fn default_c() -> f64 {
    crate::svm::DEFAULT_C
}
fn default_folds() -> usize {
    5
}
fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Rows where this column equals 0 are dropped during cleaning.
    #[serde(default)]
    pub soma_column: Option<String>,
    /// Optional Mahalanobis outlier filter applied after cleaning.
    #[serde(default)]
    pub mahalanobis_alpha: Option<f64>,
    #[serde(default)]
    pub sample_cap: Option<usize>,
    pub rescaler: RescaleMethod,
    pub reducer: ReducerConfig,
    pub algorithm: Algorithm,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Shot count for sampled kernels; exact statevector kernels when absent.
    #[serde(default)]
    pub shots: Option<usize>,
    #[serde(default = "default_c")]
    pub svm_c: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fit preprocessing once on the whole training split instead of per fold.
    #[serde(default)]
    pub fit_prep_once: bool,
    /// Clip negative eigenvalues of sampled training Gram matrices.
    #[serde(default = "default_true")]
    pub psd_clip: bool,
    /// Overrides for kernel alignment (`q_kernel_training` only).
    #[serde(default)]
    pub qka: Option<QkaConfig>,
}

impl ExperimentConfig {
    /// Minimal config with every optional field at its default.
    pub fn new(dataset_path: impl Into<PathBuf>, rescaler: RescaleMethod, reducer: ReducerConfig, algorithm: Algorithm) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            label_column: default_label_column(),
            soma_column: None,
            mahalanobis_alpha: None,
            sample_cap: None,
            rescaler,
            reducer,
            algorithm,
            reps: default_reps(),
            shots: None,
            svm_c: default_c(),
            folds: default_folds(),
            test_fraction: default_test_fraction(),
            seed: 0,
            fit_prep_once: false,
            psd_clip: true,
            qka: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(self.svm_c > 0.0) {
            return Err(Error::Config(format!("svm_c must be positive, got {}", self.svm_c)));
        }
        if self.reducer.kind != ReducerKind::None && self.reducer.k == 0 {
            return Err(Error::Config(format!("reducer {} needs k >= 1", self.reducer.kind.name())));
        }
        if self.algorithm.is_quantum() {
            if self.reducer.kind != ReducerKind::None && self.reducer.k > MAX_QUBITS {
                return Err(Error::Config(format!(
                    "quantum algorithms need k <= {MAX_QUBITS} qubits, got {}",
                    self.reducer.k
                )));
            }
            if self.reps == 0 {
                return Err(Error::Config("reps must be at least 1".into()));
            }
            if self.shots == Some(0) {
                return Err(Error::Config("shots must be at least 1".into()));
            }
        }
        if let Some(a) = self.mahalanobis_alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("mahalanobis_alpha must lie in (0, 1), got {a}")));
            }
        }
        if let Some(q) = &self.qka {
            q.validate()?;
        }
        Ok(())
    }
}
