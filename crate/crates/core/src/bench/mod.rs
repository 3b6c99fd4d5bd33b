//! End-to-end harness: datasets, configs, the preprocessing + kernel + SVM
//! pipeline, cross-validation, experiment grids and the oracle self-check.

mod config;
mod dataset;
mod experiment;
mod pipeline;
mod selfcheck;

pub use config::{Algorithm, ExperimentConfig, ReducerConfig, ReducerKind};
pub use dataset::{clean, kfold_indices, load_csv, read_csv, split, split_indices, stratified_sample, Dataset};
pub use experiment::{
    kfold_cv, kfold_cv_detailed, load_dataset, run_experiment, run_grid, run_grid_on, run_on_dataset, score_table,
    training_split, write_grid, CvReport, CvSummary, FoldOutcome, GridCell, GridConfig, SAMPLE_CAPS,
};
pub use pipeline::{accuracy, train_kernel, FittedModel, FittedPrep, FittedReducer, KernelChoice, TrainKernel};
pub use selfcheck::{selfcheck, CheckResult};
