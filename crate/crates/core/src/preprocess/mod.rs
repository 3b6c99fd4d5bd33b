//! Feature engineering: rescalers, outlier filtering, tree-based feature
//! selection and linear feature extraction.

mod extract;
mod outliers;
mod rescale;
mod stats;
mod tree;

pub use extract::{Lda, Pca};
pub use outliers::{mahalanobis_filter, MahalanobisOutcome, DEFAULT_ALPHA};
pub use rescale::{
    apply_rescaler, box_cox, box_cox_log_likelihood, fit_rescaler, logistic, yeo_johnson, yeo_johnson_log_likelihood,
    FittedStats, RescaleMethod, RescalerParams,
};
pub use stats::{chi_square_quantile, mean_std, normal_cdf, normal_quantile};
pub use tree::{
    forest_importances, gini, select_top_k, tree_importances, ForestConfig, ImportanceMethod, ImportanceReport,
    TreeConfig,
};
