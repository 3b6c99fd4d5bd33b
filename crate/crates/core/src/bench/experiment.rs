use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, ReducerConfig, ReducerKind};
use super::dataset::{clean, kfold_indices, load_csv, split_indices, stratified_sample, Dataset};
use super::pipeline::{accuracy, FittedModel, FittedPrep};
use crate::error::{Error, Result, StageExt};
use crate::preprocess::{mahalanobis_filter, RescaleMethod};
use crate::qka::QkaResult;

/// Fold statistics: mean, population std and `mean +- 2 std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub fold_scores: Vec<f64>,
    pub cv_mean: f64,
    pub cv_std: f64,
    pub ci95: [f64; 2],
}

impl CvSummary {
    pub fn from_scores(fold_scores: Vec<f64>) -> CvSummary {
        let n = fold_scores.len().max(1) as f64;
        let cv_mean = fold_scores.iter().sum::<f64>() / n;
        let cv_std = (fold_scores.iter().map(|s| (s - cv_mean).powi(2)).sum::<f64>() / n).sqrt();
        CvSummary { fold_scores, cv_mean, cv_std, ci95: [cv_mean - 2.0 * cv_std, cv_mean + 2.0 * cv_std] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: ExperimentConfig,
    pub fold_scores: Vec<f64>,
    pub cv_mean: f64,
    pub cv_std: f64,
    pub ci95: [f64; 2],
    pub test_accuracy: f64,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qka: Option<QkaResult>,
    pub versions: BTreeMap<String, String>,
}

impl CvReport {
    /// The report without wall-clock timings, for reproducibility checks.
    pub fn without_timings(&self) -> CvReport {
        CvReport { timings: BTreeMap::new(), ..self.clone() }
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("qkm-core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("report_format".to_string(), "1".to_string()),
    ])
}

/// Per-fold preprocessing and score.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub validation: Vec<usize>,
    pub prep: FittedPrep,
    pub score: f64,
}

fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Stratified k-fold CV where every fold fits its own preprocessing on
/// its training rows only (unless `fit_prep_once` is set).
pub fn kfold_cv_detailed(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<FoldOutcome>> {
    let folds = kfold_indices(&train.labels, cfg.folds, cfg.seed)?;
    let shared = if cfg.fit_prep_once {
        Some(FittedPrep::fit(cfg, train.features.view(), &train.labels).stage("preprocess")?)
    } else {
        None
    };
    folds
        .into_par_iter()
        .enumerate()
        .map(|(f, validation)| {
            let fit_rows = complement(train.len(), &validation);
            let fit = train.subset(&fit_rows);
            let val = train.subset(&validation);
            let prep = match &shared {
                Some(p) => p.clone(),
                None => FittedPrep::fit(cfg, fit.features.view(), &fit.labels).stage("preprocess")?,
            };
            let xf = prep.transform(fit.features.view())?;
            let xv = prep.transform(val.features.view())?;
            let model = FittedModel::fit(cfg, &xf, &fit.labels, f).stage("train")?;
            let score = accuracy(&model.predict(&xv).stage("predict")?, &val.labels);
            Ok(FoldOutcome { validation, prep, score })
        })
        .collect()
}

pub fn kfold_cv(cfg: &ExperimentConfig, train: &Dataset) -> Result<CvSummary> {
    let outcomes = kfold_cv_detailed(cfg, train)?;
    Ok(CvSummary::from_scores(outcomes.iter().map(|o| o.score).collect()))
}

/// Load, clean and optionally outlier-filter the configured dataset.
pub fn load_dataset(cfg: &ExperimentConfig, timings: &mut BTreeMap<String, f64>) -> Result<Dataset> {
    let t = Instant::now();
    let raw = load_csv(&cfg.dataset_path, &cfg.label_column).stage("load")?;
    timings.insert("load".into(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let mut ds = clean(&raw, cfg.soma_column.as_deref()).stage("clean")?;
    if let Some(alpha) = cfg.mahalanobis_alpha {
        let kept = mahalanobis_filter(ds.features.view(), alpha).stage("outliers")?.kept;
        ds = ds.subset(&kept);
    }
    timings.insert("clean".into(), t.elapsed().as_secs_f64());
    Ok(ds)
}

/// Sample cap, split, CV on the training split, refit and held-out score.
pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<CvReport> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    run_timed(cfg, ds, &mut timings)
}

fn run_timed(cfg: &ExperimentConfig, ds: &Dataset, timings: &mut BTreeMap<String, f64>) -> Result<CvReport> {
    let t = Instant::now();
    let ds = match cfg.sample_cap {
        Some(cap) => ds.subset(&stratified_sample(&ds.labels, cap, cfg.seed)),
        None => ds.clone(),
    };
    let (train_idx, test_idx) = split_indices(&ds.labels, &ds.label_names, cfg.test_fraction, cfg.seed).stage("split")?;
    let (train, test) = (ds.subset(&train_idx), ds.subset(&test_idx));
    timings.insert("split".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let cv = kfold_cv(cfg, &train).stage("cv")?;
    timings.insert("cv".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let prep = FittedPrep::fit(cfg, train.features.view(), &train.labels).stage("refit")?;
    let xt = prep.transform(train.features.view()).stage("refit")?;
    let model = FittedModel::fit(cfg, &xt, &train.labels, cfg.folds).stage("refit")?;
    timings.insert("refit".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let xs = prep.transform(test.features.view()).stage("test")?;
    let test_accuracy = accuracy(&model.predict(&xs).stage("test")?, &test.labels);
    timings.insert("test".into(), t.elapsed().as_secs_f64());

    Ok(CvReport {
        config: cfg.clone(),
        fold_scores: cv.fold_scores,
        cv_mean: cv.cv_mean,
        cv_std: cv.cv_std,
        ci95: cv.ci95,
        test_accuracy,
        timings: timings.clone(),
        qka: model.qka,
        versions: versions(),
    })
}

/// The training split a run would use: load, clean, cap and split.
pub fn training_split(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let ds = load_dataset(cfg, &mut BTreeMap::new())?;
    let ds = match cfg.sample_cap {
        Some(cap) => ds.subset(&stratified_sample(&ds.labels, cap, cfg.seed)),
        None => ds,
    };
    let (train_idx, _) = split_indices(&ds.labels, &ds.label_names, cfg.test_fraction, cfg.seed).stage("split")?;
    Ok(ds.subset(&train_idx))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CvReport> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let ds = load_dataset(cfg, &mut timings)?;
    run_timed(cfg, &ds, &mut timings)
}

/// A base config crossed with lists of rescalers, reducers, algorithms and
/// sample caps. Missing lists default to every rescaler, both tree
/// selectors, every algorithm and the base sample cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub rescalers: Option<Vec<RescaleMethod>>,
    #[serde(default)]
    pub reducers: Option<Vec<ReducerKind>>,
    #[serde(default)]
    pub algorithms: Option<Vec<Algorithm>>,
    /// `null` entries mean the full dataset.
    #[serde(default)]
    pub sample_caps: Option<Vec<Option<usize>>>,
}

/// The sizes of the five nested samples: four caps and the full data.
pub const SAMPLE_CAPS: [Option<usize>; 5] = [Some(260), Some(626), Some(1143), Some(2080), None];

impl GridConfig {
    pub fn new(base: ExperimentConfig) -> Self {
        GridConfig { base, rescalers: None, reducers: None, algorithms: None, sample_caps: None }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Every cell in rescaler-major order.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let rescalers = self.rescalers.clone().unwrap_or_else(|| RescaleMethod::ALL.to_vec());
        let reducers = self.reducers.clone().unwrap_or_else(|| vec![ReducerKind::SelectTree, ReducerKind::SelectForest]);
        let algorithms = self.algorithms.clone().unwrap_or_else(|| Algorithm::ALL.to_vec());
        let caps = self.sample_caps.clone().unwrap_or_else(|| vec![self.base.sample_cap]);
        let mut out = Vec::with_capacity(rescalers.len() * reducers.len() * algorithms.len() * caps.len());
        for &rescaler in &rescalers {
            for &kind in &reducers {
                for &algorithm in &algorithms {
                    for &sample_cap in &caps {
                        out.push(ExperimentConfig {
                            rescaler,
                            reducer: ReducerConfig { kind, k: self.base.reducer.k },
                            algorithm,
                            sample_cap,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// One grid cell: its report, or why it failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CvReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs every cell concurrently on one shared dataset; results keep cell order.
pub fn run_grid_on(grid: &GridConfig, ds: &Dataset) -> Vec<GridCell> {
    grid.cells()
        .into_par_iter()
        .map(|config| match run_on_dataset(&config, ds) {
            Ok(report) => GridCell { config, report: Some(report), error: None },
            Err(e) => GridCell { config, report: None, error: Some(e.to_string()) },
        })
        .collect()
}

pub fn run_grid(grid: &GridConfig) -> Result<Vec<GridCell>> {
    grid.base.validate()?;
    let ds = load_dataset(&grid.base, &mut BTreeMap::new())?;
    Ok(run_grid_on(grid, &ds))
}

/// CSV summary, one line per cell, e.g. the score-versus-sample-size table.
pub fn score_table(cells: &[GridCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "rescaler", "reducer", "k", "algorithm", "sample_cap", "cv_mean", "cv_std", "ci95_low", "ci95_high",
        "test_accuracy", "error",
    ])
    .map_err(csv_err)?;
    for c in cells {
        let cap = c.config.sample_cap.map_or("full".to_string(), |v| v.to_string());
        let (mean, std, lo, hi, test) = match &c.report {
            Some(r) => (
                r.cv_mean.to_string(),
                r.cv_std.to_string(),
                r.ci95[0].to_string(),
                r.ci95[1].to_string(),
                r.test_accuracy.to_string(),
            ),
            None => Default::default(),
        };
        w.write_record([
            c.config.rescaler.name(),
            c.config.reducer.kind.name(),
            &c.config.reducer.k.to_string(),
            c.config.algorithm.name(),
            &cap,
            &mean,
            &std,
            &lo,
            &hi,
            &test,
            c.error.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `cell_NNNN.json` per cell plus `summary.csv` into `dir`.
pub fn write_grid(cells: &[GridCell], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, cell) in cells.iter().enumerate() {
        let f = std::fs::File::create(dir.join(format!("cell_{i:04}.json")))?;
        serde_json::to_writer_pretty(f, cell)?;
    }
    std::fs::write(dir.join("summary.csv"), score_table(cells)?)?;
    Ok(())
}
