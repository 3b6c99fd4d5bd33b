use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qkernel::entry_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    DecisionTree,
    RandomForest,
}

impl ImportanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            ImportanceMethod::DecisionTree => "decision_tree",
            ImportanceMethod::RandomForest => "random_forest",
        }
    }
}

impl fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ImportanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decision_tree" => Ok(ImportanceMethod::DecisionTree),
            "random_forest" => Ok(ImportanceMethod::RandomForest),
            _ => Err(Error::Config(format!("unknown selector {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub importances: Vec<f64>,
    pub method: ImportanceMethod,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: None, min_samples_split: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features drawn per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_features: None, bootstrap: true, max_depth: None, min_samples_split: 2, seed: 0 }
    }
}

/// `1 - sum p_i^2` over class counts.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    // One rounding: (n^2 - sum c^2) / n^2.
    let sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let total = (n as u128) * (n as u128);
    (total - sq) as f64 / total as f64
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    max_depth: Option<usize>,
    min_samples_split: usize,
    /// `None` scans every feature in index order.
    max_features: Option<usize>,
    total: f64,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
    left_gini: f64,
    right_gini: f64,
    n_left: usize,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_split_on(&self, idx: &[usize], feature: usize, parent: &[usize]) -> Option<Split> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| self.x[(a, feature)].total_cmp(&self.x[(b, feature)]));
        let n = order.len();
        let mut left = vec![0usize; self.n_classes];
        let mut right = parent.to_vec();
        let mut best: Option<Split> = None;
        for k in 0..n - 1 {
            let c = self.y[order[k]];
            left[c] += 1;
            right[c] -= 1;
            let (a, b) = (self.x[(order[k], feature)], self.x[(order[k + 1], feature)]);
            if a == b {
                continue;
            }
            let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
            let (gl, gr) = (gini(&left), gini(&right));
            let impurity = (nl * gl + nr * gr) / n as f64;
            if best.as_ref().is_none_or(|s| impurity < s.impurity) {
                best = Some(Split {
                    feature,
                    threshold: 0.5 * (a + b),
                    impurity,
                    left_gini: gl,
                    right_gini: gr,
                    n_left: k + 1,
                });
            }
        }
        best
    }

    fn grow(&self, root: Vec<usize>, rng: &mut ChaCha8Rng, importances: &mut [f64]) {
        let d = self.x.ncols();
        let mut stack = vec![(root, 0usize)];
        while let Some((idx, depth)) = stack.pop() {
            let counts = self.counts(&idx);
            let node_gini = gini(&counts);
            if idx.len() < self.min_samples_split || node_gini == 0.0 || self.max_depth.is_some_and(|m| depth >= m) {
                continue;
            }
            let order: Vec<usize> = match self.max_features {
                Some(_) => {
                    let mut f: Vec<usize> = (0..d).collect();
                    f.shuffle(rng);
                    f
                }
                None => (0..d).collect(),
            };
            let budget = self.max_features.unwrap_or(d);
            let mut best: Option<Split> = None;
            let mut examined = 0;
            for &f in &order {
                if examined >= budget {
                    break;
                }
                match self.best_split_on(&idx, f, &counts) {
                    Some(s) => {
                        examined += 1;
                        if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                            best = Some(s);
                        }
                    }
                    // Constant features do not use up the budget.
                    None => continue,
                }
            }
            let Some(split) = best else { continue };
            let n = idx.len() as f64;
            let nl = split.n_left as f64;
            let gain = (n * node_gini - nl * split.left_gini - (n - nl) * split.right_gini) / self.total;
            importances[split.feature] += gain.max(0.0);
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| self.x[(i, split.feature)] <= split.threshold);
            stack.push((r, depth + 1));
            stack.push((l, depth + 1));
        }
    }
}

fn encode_labels(x: ArrayView2<f64>, y: &[usize]) -> Result<(Vec<usize>, usize)> {
    if x.nrows() != y.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Contract("importance estimation needs at least 2 classes".into()));
    }
    let enc = y.iter().map(|c| classes.binary_search(c).unwrap()).collect();
    Ok((enc, classes.len()))
}

fn normalize(raw: Vec<f64>, method: ImportanceMethod, mut warnings: Vec<String>) -> ImportanceReport {
    let total: f64 = raw.iter().sum();
    let importances = if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        warnings.push("no split was possible; importances are all zero".into());
        raw
    };
    ImportanceReport { importances, method, warnings }
}

/// Mean-decrease-in-Gini importances of one greedy CART tree.
pub fn tree_importances(x: ArrayView2<f64>, y: &[usize], cfg: &TreeConfig) -> Result<ImportanceReport> {
    let (enc, k) = encode_labels(x, y)?;
    let grower = Grower {
        x,
        y: &enc,
        n_classes: k,
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split.max(2),
        max_features: None,
        total: x.nrows() as f64,
    };
    let mut raw = vec![0.0; x.ncols()];
    grower.grow((0..x.nrows()).collect(), &mut ChaCha8Rng::seed_from_u64(cfg.seed), &mut raw);
    Ok(normalize(raw, ImportanceMethod::DecisionTree, Vec::new()))
}

/// Random-forest importances: per-tree normalized, averaged, renormalized.
pub fn forest_importances(x: ArrayView2<f64>, y: &[usize], cfg: &ForestConfig) -> Result<ImportanceReport> {
    let (enc, k) = encode_labels(x, y)?;
    if cfg.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    let (n, d) = x.dim();
    let max_features = cfg.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
    if max_features == 0 {
        return Err(Error::Config("max_features must be at least 1".into()));
    }
    let per_tree: Vec<Vec<f64>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(entry_seed(cfg.seed, t, 0));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let grower = Grower {
                x,
                y: &enc,
                n_classes: k,
                max_depth: cfg.max_depth,
                min_samples_split: cfg.min_samples_split.max(2),
                max_features: (max_features < d).then_some(max_features),
                total: rows.len() as f64,
            };
            let mut raw = vec![0.0; d];
            grower.grow(rows, &mut rng, &mut raw);
            let s: f64 = raw.iter().sum();
            if s > 0.0 {
                raw.iter_mut().for_each(|v| *v /= s);
            }
            raw
        })
        .collect();
    let mut mean = vec![0.0; d];
    for tree in &per_tree {
        for (m, v) in mean.iter_mut().zip(tree) {
            *m += v / cfg.n_trees as f64;
        }
    }
    Ok(normalize(mean, ImportanceMethod::RandomForest, Vec::new()))
}

/// Indices of the `k` largest importances (ties to the lower index), ascending.
pub fn select_top_k(report: &ImportanceReport, k: usize) -> Result<Vec<usize>> {
    let d = report.importances.len();
    if k == 0 || k > d {
        return Err(Error::Config(format!("k must lie in 1..={d}, got {k}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| report.importances[b].total_cmp(&report.importances[a]).then(a.cmp(&b)));
    let mut top = order[..k].to_vec();
    top.sort_unstable();
    Ok(top)
}
