use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use qkm_core::bench::{self, ExperimentConfig, FittedPrep, GridConfig, ReducerKind};
use qkm_core::preprocess::{
    apply_rescaler, fit_rescaler, forest_importances, select_top_k, tree_importances, ForestConfig, TreeConfig,
};

#[derive(Parser)]
#[command(name = "qkm", version, about = "Quantum-kernel SVM experiments on tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate one configuration and score the held-out split.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit preprocessing once on the training split instead of per fold.
        #[arg(long)]
        fit_prep_once: bool,
    },
    /// Run every cell of an experiment grid.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cross the grid with the five nested sample sizes.
        #[arg(long)]
        sample_sizes: bool,
    },
    /// Write the training-split kernel matrix in QKGM format.
    Gram {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print feature importances on the rescaled training split.
    Importances {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the fast engines against their dense reference implementations.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn emit_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            serde_json::to_writer_pretty(BufWriter::new(f), value)?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn run(config: &Path, out: Option<&Path>, fit_prep_once: bool) -> Result<()> {
    let mut cfg = read_config(config)?;
    cfg.fit_prep_once |= fit_prep_once;
    let report = bench::run_experiment(&cfg)?;
    eprintln!(
        "cv {:.4} +- {:.4} (ci95 {:.4}..{:.4}), test {:.4}",
        report.cv_mean, report.cv_std, report.ci95[0], report.ci95[1], report.test_accuracy
    );
    emit_json(&report, out)
}

fn grid(config: &Path, out: &Path, sample_sizes: bool) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut grid = GridConfig::from_json(&text)?;
    if sample_sizes {
        grid.sample_caps = Some(bench::SAMPLE_CAPS.to_vec());
    }
    let cells = bench::run_grid(&grid)?;
    bench::write_grid(&cells, out)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    eprintln!("{} cells written to {} ({failed} failed)", cells.len(), out.display());
    Ok(())
}

fn gram(config: &Path, out: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let train = bench::training_split(&cfg)?;
    let prep = FittedPrep::fit(&cfg, train.features.view(), &train.labels)?;
    let x = prep.transform(train.features.view())?;
    let kernel = bench::train_kernel(&cfg, &x, &train.labels, 0)?;
    let f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    kernel.gram.write_to(BufWriter::new(f))?;
    eprintln!("{}x{} kernel written to {}", kernel.gram.size_a(), kernel.gram.size_b(), out.display());
    Ok(())
}

fn importances(config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let train = bench::training_split(&cfg)?;
    let params = fit_rescaler(cfg.rescaler, train.features.view())?;
    let scaled = apply_rescaler(&params, train.features.view())?;
    let report = match cfg.reducer.kind {
        ReducerKind::SelectForest => {
            forest_importances(scaled.view(), &train.labels, &ForestConfig { seed: cfg.seed, ..Default::default() })?
        }
        ReducerKind::SelectTree | ReducerKind::None => {
            tree_importances(scaled.view(), &train.labels, &TreeConfig { seed: cfg.seed, ..Default::default() })?
        }
        other => bail!("importances need a selection reducer, got {}", other.name()),
    };
    let selected = if cfg.reducer.k > 0 { select_top_k(&report, cfg.reducer.k)? } else { Vec::new() };
    let ranked: Vec<serde_json::Value> = train
        .feature_names
        .iter()
        .zip(&report.importances)
        .map(|(name, v)| serde_json::json!({ "feature": name, "importance": v }))
        .collect();
    let selected_names: Vec<&str> = selected.iter().map(|&j| train.feature_names[j].as_str()).collect();
    emit_json(
        &serde_json::json!({
            "method": report.method,
            "importances": ranked,
            "selected": selected_names,
            "warnings": report.warnings,
        }),
        None,
    )
}

fn selfcheck(seed: u64) -> Result<bool> {
    let results = bench::selfcheck(seed)?;
    for r in &results {
        println!("{} {}: {}", if r.passed { "ok  " } else { "FAIL" }, r.name, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, out, fit_prep_once } => run(config, out.as_deref(), *fit_prep_once).map(|_| true),
        Command::Grid { config, out, sample_sizes } => grid(config, out, *sample_sizes).map(|_| true),
        Command::Gram { config, out } => gram(config, out).map(|_| true),
        Command::Importances { config } => importances(config).map(|_| true),
        Command::Selfcheck { seed } => selfcheck(*seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
