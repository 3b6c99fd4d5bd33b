//! Acceptance criteria runner. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::Array2;
use qkm_core::bench::{kfold_cv, kfold_cv_detailed, Algorithm, Dataset, ExperimentConfig, ReducerConfig, ReducerKind};
use qkm_core::featuremap::{prepare_state, FeatureMapKind, FeatureMapSpec};
use qkm_core::oracle;
use qkm_core::preprocess::{
    apply_rescaler, box_cox, fit_rescaler, forest_importances, gini, tree_importances, yeo_johnson, ForestConfig,
    RescaleMethod, TreeConfig,
};
use qkm_core::qka::{self, CovariantKernelSpec, QkaConfig};
use qkm_core::qkernel::{self, KernelMode};
use qkm_core::svm::{self, ClassicalKernel, ClassicalKernelKind};
use qkm_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size >= layout.size() {
                let now = CURRENT.fetch_add(new_size - layout.size(), Ordering::Relaxed) + new_size - layout.size();
                PEAK.fetch_max(now, Ordering::Relaxed);
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Outcome of one criterion: whether it held, and the measured numbers.
struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn random_x(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn c1_circuit_oracle() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut draws = 0;
    for kind in FeatureMapKind::ALL {
        for n in 1..=4 {
            for _ in 0..50 {
                let spec = FeatureMapSpec::with_reps(kind, n, rng.random_range(1..=3))?;
                let x = random_x(&mut rng, n);
                let fast = prepare_state(&spec, &x)?;
                let dense = oracle::dense_feature_state(&spec, &x, None);
                for (a, b) in fast.amplitudes().iter().zip(dense.iter()) {
                    worst = worst.max((a - b).norm());
                }
                draws += 1;
            }
        }
    }
    let t = start.elapsed();
    verdict(
        worst < 1e-12 && within(t, 10.0),
        format!("{draws} draws, max amplitude error {worst:.2e}, {:.2}s", t.as_secs_f64()),
    )
}

fn c2_self_fidelity() -> Result<Verdict> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_diag, mut asym, mut out_of_range) = (0.0f64, 0usize, 0usize);
    for kind in FeatureMapKind::ALL {
        let spec = FeatureMapSpec::new(kind, 5)?;
        for _ in 0..200 {
            let x = random_x(&mut rng, 5);
            let y = random_x(&mut rng, 5);
            let kxx = qkernel::kernel_entry(&spec, &x, &x, KernelMode::Exact)?;
            let kxy = qkernel::kernel_entry(&spec, &x, &y, KernelMode::Exact)?;
            let kyx = qkernel::kernel_entry(&spec, &y, &x, KernelMode::Exact)?;
            worst_diag = worst_diag.max((kxx - 1.0).abs());
            asym += usize::from(kxy != kyx);
            out_of_range += [kxx, kxy, kyx].iter().filter(|&&v| !(-1e-12..=1.0 + 1e-12).contains(&v)).count();
        }
    }
    let t = start.elapsed();
    verdict(
        worst_diag <= 1e-12 && asym == 0 && out_of_range == 0 && within(t, 30.0),
        format!(
            "max |K(x,x)-1| {worst_diag:.2e}, {asym} asymmetric, {out_of_range} out of range, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn c3_gram_psd() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let kind = FeatureMapKind::ALL[rng.random_range(0..FeatureMapKind::ALL.len())];
        let spec = FeatureMapSpec::new(kind, 4)?;
        let xs: Vec<Vec<f64>> = (0..16).map(|_| random_x(&mut rng, 4)).collect();
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        min_eig = min_eig.min(qkernel::gram(&spec, &rows, KernelMode::Exact)?.min_eigenvalue()?);
    }
    verdict(min_eig >= -1e-10, format!("smallest eigenvalue over 20 Gram matrices {min_eig:.3e}"))
}

fn c4_shot_noise() -> Result<Verdict> {
    let spec = FeatureMapSpec::new(FeatureMapKind::Zz, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, y, p) = loop {
        let x = random_x(&mut rng, 2);
        let y = random_x(&mut rng, 2);
        let p = qkernel::kernel_entry(&spec, &x, &y, KernelMode::Exact)?;
        if p > 0.3 && p < 0.7 {
            break (x, y, p);
        }
    };
    let shots = 1024;
    let samples: Vec<f64> = (0..200u64)
        .map(|seed| qkernel::kernel_entry(&spec, &x, &y, KernelMode::Sampled { shots, seed }))
        .collect::<Result<_>>()?;
    let mean = samples.iter().sum::<f64>() / 200.0;
    let std = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    let sigma = (p * (1.0 - p) / shots as f64).sqrt();
    let bias_bound = 4.0 * sigma / 200f64.sqrt();
    let ratio = std / sigma;
    verdict(
        (mean - p).abs() < bias_bound && (ratio - 1.0).abs() <= 0.2,
        format!(
            "p {p:.4}, |mean-p| {:.2e} (bound {bias_bound:.2e}), std/expected {ratio:.3}",
            (mean - p).abs()
        ),
    )
}

fn c5_smo_oracle() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_rel, mut worst_kkt, mut broken) = (0.0f64, 0.0f64, 0usize);
    for problem in 0..25 {
        let n = rng.random_range(3..=8);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| random_x(&mut rng, 3)).collect();
        let rows: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let mut y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        y.rotate_left(rng.random_range(0..n));
        let c = [0.5, 1.0, 10.0][problem % 3];
        let k = match problem % 3 {
            0 => ClassicalKernel::Rbf { sigma: rng.random_range(0.3..2.0) }.gram(&rows)?,
            1 => ClassicalKernel::Linear.gram(&rows)?,
            _ => qkernel::gram(&FeatureMapSpec::new(FeatureMapKind::Zz, 3)?, &rows, KernelMode::Exact)?,
        };
        let model = svm::smo_train(&k, &y, c, 1e-6)?;
        let dense = DMatrix::from_fn(n, n, |i, j| k.get(i, j));
        let (_, obj) = oracle::projected_gradient_dual(&dense, &y, c, 1e-8);
        worst_rel = worst_rel.max((model.dual_objective - obj).abs() / obj.abs().max(1e-12));
        worst_kkt = worst_kkt.max(model.kkt_residual(&k, &y));
        let alpha = model.dense_alpha(n);
        let box_ok = alpha.iter().all(|&a| (-1e-12..=c + 1e-12).contains(&a));
        let balance: f64 = alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum();
        let support_ok = model.support_indices.iter().all(|&i| alpha[i] > 0.0)
            && (0..n).filter(|&i| alpha[i] > 0.0).count() == model.support_indices.len();
        if !(box_ok && balance.abs() < 1e-9 && support_ok) {
            broken += 1;
        }
    }
    verdict(
        worst_rel <= 1e-4 && worst_kkt <= 1e-6 && broken == 0,
        format!("max relative objective gap {worst_rel:.2e}, max KKT residual {worst_kkt:.2e}, {broken} invariant failures"),
    )
}

fn plain_config(rescaler: RescaleMethod, reducer: ReducerConfig, algorithm: Algorithm) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("in-memory", rescaler, reducer, algorithm);
    cfg.seed = 7;
    cfg
}

fn c6_blobs() -> Result<Verdict> {
    let start = Instant::now();
    let ds = common::gaussian_blobs(&common::triangle(1.5), 20, 0.3, 6);
    let none = ReducerConfig { kind: ReducerKind::None, k: 0 };
    let rbf = kfold_cv(&plain_config(RescaleMethod::Identity, none, Algorithm::Classical(ClassicalKernelKind::Rbf)), &ds)?;
    let zz = kfold_cv(&plain_config(RescaleMethod::Identity, none, Algorithm::Quantum(FeatureMapKind::Zz)), &ds)?;
    let t = start.elapsed();
    verdict(
        rbf.cv_mean >= 0.95 && zz.cv_mean >= 0.80 && within(t, 60.0),
        format!("svm_rbf cv_mean {:.3}, q_kernel_zz cv_mean {:.3}, {:.2}s", rbf.cv_mean, zz.cv_mean, t.as_secs_f64()),
    )
}

fn column_moments(z: &Array2<f64>, j: usize) -> (f64, f64) {
    let col: Vec<f64> = z.column(j).to_vec();
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    (mean, (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn monotone(x: &Array2<f64>, z: &Array2<f64>) -> bool {
    (0..x.ncols()).all(|j| {
        (0..x.nrows()).all(|a| (0..x.nrows()).all(|b| x[(a, j)] > x[(b, j)] || z[(a, j)] <= z[(b, j)]))
    })
}

fn c7_rescalers() -> Result<Verdict> {
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let n = rng.random_range(20..80);
        // Mixed shapes: Gaussian-ish, skewed positive, heavy ties.
        let x = Array2::from_shape_fn((n, 4), |(_, j)| match j {
            0 => rng.random_range(-3.0..3.0) + rng.random_range(-3.0..3.0),
            1 => rng.random_range(-2.0f64..2.0).exp() * 10.0,
            2 => (rng.random_range(0..5) as f64) - 2.0,
            _ => rng.random_range(0.1..100.0),
        });
        let fit_apply = |m: RescaleMethod| -> Result<Array2<f64>> { apply_rescaler(&fit_rescaler(m, x.view())?, x.view()) };
        let z = fit_apply(RescaleMethod::Standard)?;
        for j in 0..4 {
            let (m, s) = column_moments(&z, j);
            if m.abs() >= 1e-10 || (s - 1.0).abs() > 1e-10 {
                failures.push(format!("seed {seed}: standard column {j} mean {m:.2e} std {s}"));
            }
        }
        let ranges = [
            (RescaleMethod::MinMax, 0.0, 1.0, false),
            (RescaleMethod::MaxAbs, -1.0, 1.0, false),
            (RescaleMethod::Logistic, 0.0, 1.0, true),
            (RescaleMethod::QuantileUniform, 0.0, 1.0, false),
        ];
        for (m, lo, hi, open) in ranges {
            let z = fit_apply(m)?;
            let ok = z.iter().all(|&v| if open { v > lo && v < hi } else { v >= lo && v <= hi });
            if !ok {
                failures.push(format!("seed {seed}: {m} left its range"));
            }
        }
        for m in [RescaleMethod::QuantileUniform, RescaleMethod::QuantileNormal] {
            if !monotone(&x, &fit_apply(m)?) {
                failures.push(format!("seed {seed}: {m} is not monotone"));
            }
        }
        for &v in x.column(1).iter().chain([0.5, 1.0, 2.0, 10.0].iter()) {
            if (box_cox(v, 1e-8) - v.ln()).abs() >= 1e-6 {
                failures.push(format!("seed {seed}: Box-Cox discontinuous at {v}"));
            }
        }
        if x.iter().any(|&v| (yeo_johnson(v, 1.0) - v).abs() > 1e-12) {
            failures.push(format!("seed {seed}: Yeo-Johnson at 1 is not the identity"));
        }
    }
    let detail = if failures.is_empty() { "10 datasets, all invariants hold".to_string() } else { failures.join("; ") };
    verdict(failures.is_empty(), detail)
}

fn c8_gini_importance() -> Result<Verdict> {
    let exact = gini(&[7]) == 0.0 && gini(&[4, 4]) == 0.5 && gini(&[3, 3, 3]) == 2.0 / 3.0;
    let (x, y) = common::sign_fixture(200, 6, 8);
    let tree = tree_importances(x.view(), &y, &TreeConfig::default())?;
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    let mut worst_sum = (tree.importances.iter().sum::<f64>() - 1.0).abs();
    let mut forest_hits = 0;
    for seed in 0..10 {
        let r = forest_importances(x.view(), &y, &ForestConfig { seed, ..ForestConfig::default() })?;
        worst_sum = worst_sum.max((r.importances.iter().sum::<f64>() - 1.0).abs());
        forest_hits += usize::from(argmax(&r.importances) == 0);
    }
    let tree_hit = argmax(&tree.importances) == 0;
    verdict(
        exact && worst_sum <= 1e-9 && tree_hit && forest_hits == 10,
        format!(
            "gini exact {exact}, max |sum-1| {worst_sum:.1e}, tree argmax 0: {tree_hit}, forest argmax 0 in {forest_hits}/10 seeds"
        ),
    )
}

fn c9_qka() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = FeatureMapSpec::new(FeatureMapKind::Zz, 3)?;
    let cov = CovariantKernelSpec::new(base);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_x(&mut rng, 3);
        let y = random_x(&mut rng, 3);
        let a = qka::kernel_entry_lambda(&cov, &[0.0; 3], &x, &y, KernelMode::Exact)?;
        let b = qkernel::kernel_entry(&base, &x, &y, KernelMode::Exact)?;
        worst = worst.max((a - b).abs());
    }

    let toy = CovariantKernelSpec::new(FeatureMapSpec::new(FeatureMapKind::Zz, 2)?);
    let pts = [[0.1, 0.2], [0.3, -0.1], [-0.2, 0.25], [0.0, 0.05], [1.3, 1.1], [1.0, 1.4], [1.2, 0.9], [1.5, 1.25]];
    let rows: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let labels = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
    let mut gains = Vec::new();
    let mut reproducible = true;
    for seed in 0..5 {
        let cfg = QkaConfig { seed, ..QkaConfig::default() };
        let r = qka::spsa_train(&toy, &rows, &labels, &cfg)?;
        let again = qka::spsa_train(&toy, &rows, &labels, &cfg)?;
        reproducible &= r == again;
        gains.push(r.initial_loss - *r.loss_history.last().unwrap());
    }
    gains.sort_by(f64::total_cmp);
    let median_gain = gains[2];
    verdict(
        worst <= 1e-12 && median_gain >= 0.0 && reproducible,
        format!("lambda=0 max deviation {worst:.2e}, median loss decrease {median_gain:.4e}, reproducible {reproducible}"),
    )
}

fn c10_end_to_end() -> Result<Verdict> {
    let start = Instant::now();
    let ds: Dataset = common::mixture(500, 14, 43, 5, 7.0, 10);
    let select = ReducerConfig { kind: ReducerKind::SelectTree, k: 5 };
    let zz = kfold_cv(&plain_config(RescaleMethod::QuantileUniform, select, Algorithm::Quantum(FeatureMapKind::Zz)), &ds)?;
    let t = start.elapsed();
    let rbf = kfold_cv(
        &plain_config(RescaleMethod::QuantileUniform, select, Algorithm::Classical(ClassicalKernelKind::Rbf)),
        &ds,
    )?;
    verdict(
        rbf.cv_mean >= 0.9 && zz.cv_mean >= 0.9 && within(t, 600.0),
        format!(
            "q_kernel_zz cv_mean {:.3} +- {:.3} in {:.1}s, svm_rbf cv_mean {:.3}",
            zz.cv_mean,
            zz.cv_std,
            t.as_secs_f64(),
            rbf.cv_mean
        ),
    )
}

fn c11_scale_guard() -> Result<Verdict> {
    let spec = FeatureMapSpec::new(FeatureMapKind::Zz, 20)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_x(&mut rng, 20);
    let y = random_x(&mut rng, 20);
    let baseline = CURRENT.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let start = Instant::now();
    let k = qkernel::kernel_entry(&spec, &x, &y, KernelMode::Exact)?;
    let t = start.elapsed();
    let peak_mib = (PEAK.load(Ordering::Relaxed) - baseline) as f64 / (1024.0 * 1024.0);
    verdict(
        within(t, 5.0) && peak_mib < 600.0 && (0.0..=1.0 + 1e-12).contains(&k),
        format!("K = {k:.4e} in {:.2}s, peak heap {peak_mib:.1} MiB", t.as_secs_f64()),
    )
}

fn corrupt(ds: &Dataset, rows: &[usize], seed: u64) -> Dataset {
    let mut out = ds.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &i in rows {
        for v in out.features.row_mut(i) {
            *v = *v * rng.random_range(50.0..5000.0) + 1e4;
        }
    }
    out
}

fn c12_leakage() -> Result<Verdict> {
    let ds = common::mixture(120, 3, 8, 3, 3.0, 12);
    let configs = [
        plain_config(
            RescaleMethod::QuantileNormal,
            ReducerConfig { kind: ReducerKind::SelectTree, k: 3 },
            Algorithm::Classical(ClassicalKernelKind::Rbf),
        ),
        plain_config(
            RescaleMethod::YeoJohnson,
            ReducerConfig { kind: ReducerKind::Pca, k: 2 },
            Algorithm::Classical(ClassicalKernelKind::Rbf),
        ),
        plain_config(
            RescaleMethod::BoxCox,
            ReducerConfig { kind: ReducerKind::Lda, k: 2 },
            Algorithm::Quantum(FeatureMapKind::Zz),
        ),
        plain_config(
            RescaleMethod::MinMax,
            ReducerConfig { kind: ReducerKind::None, k: 0 },
            Algorithm::Classical(ClassicalKernelKind::Linear),
        ),
        plain_config(
            RescaleMethod::Standard,
            ReducerConfig { kind: ReducerKind::SelectForest, k: 4 },
            Algorithm::Classical(ClassicalKernelKind::Poly),
        ),
    ];
    let mut compared = 0;
    let mut changed = 0;
    let mut shifted = ds.clone();
    shifted.features.mapv_inplace(|v| v + 1000.0);
    for cfg in &configs {
        // Box-Cox needs strictly positive inputs.
        let ds = if cfg.rescaler == RescaleMethod::BoxCox { &shifted } else { &ds };
        let clean = kfold_cv_detailed(cfg, ds)?;
        for (f, fold) in clean.iter().enumerate() {
            let dirty = kfold_cv_detailed(cfg, &corrupt(ds, &fold.validation, f as u64))?;
            let a = serde_json::to_vec(&fold.prep).expect("serializable");
            let b = serde_json::to_vec(&dirty[f].prep).expect("serializable");
            compared += 1;
            changed += usize::from(a != b || dirty[f].validation != fold.validation);
        }
    }
    verdict(changed == 0, format!("{compared} fold fits compared byte for byte, {changed} changed"))
}

type Criterion = (&'static str, fn() -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 12] = [
        ("circuit-oracle equivalence", c1_circuit_oracle),
        ("kernel self-fidelity and symmetry", c2_self_fidelity),
        ("exact Gram PSD", c3_gram_psd),
        ("shot-noise statistics", c4_shot_noise),
        ("SMO-oracle equivalence", c5_smo_oracle),
        ("multiclass sanity on blobs", c6_blobs),
        ("rescaler invariants", c7_rescalers),
        ("Gini and importances", c8_gini_importance),
        ("kernel alignment", c9_qka),
        ("end-to-end structural reproduction", c10_end_to_end),
        ("scale guard at 20 qubits", c11_scale_guard),
        ("no preprocessing leakage", c12_leakage),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run().unwrap_or_else(|e| Verdict { passed: false, detail: format!("error: {e}") });
        failed += usize::from(!v.passed);
        println!(
            "criterion {:>2} {}: {} ({}) [{:.1}s]",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            name,
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
