use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::stats::{golden_section_max, mean_std, normal_cdf, normal_quantile, quantile_sorted, sorted_copy};
use crate::error::{Error, Result};

const LAMBDA_BOUND: f64 = 5.0;
const LAMBDA_TOL: f64 = 1e-6;
const MAX_QUANTILES: usize = 1000;
const QUANTILE_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RescaleMethod {
    Standard,
    MinMax,
    MaxAbs,
    Robust,
    L2Norm,
    Logistic,
    LogNormal,
    BoxCox,
    YeoJohnson,
    QuantileNormal,
    QuantileUniform,
    /// Pass-through; lets a pipeline skip rescaling.
    Identity,
}

impl RescaleMethod {
    pub const ALL: [RescaleMethod; 11] = [
        RescaleMethod::Standard,
        RescaleMethod::MinMax,
        RescaleMethod::MaxAbs,
        RescaleMethod::Robust,
        RescaleMethod::L2Norm,
        RescaleMethod::Logistic,
        RescaleMethod::LogNormal,
        RescaleMethod::BoxCox,
        RescaleMethod::YeoJohnson,
        RescaleMethod::QuantileNormal,
        RescaleMethod::QuantileUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RescaleMethod::Standard => "StandardScaler",
            RescaleMethod::MinMax => "MinMaxScaler",
            RescaleMethod::MaxAbs => "MaxAbsScaler",
            RescaleMethod::Robust => "RobustScaler",
            RescaleMethod::L2Norm => "l2norm",
            RescaleMethod::Logistic => "logistic",
            RescaleMethod::LogNormal => "lognormal",
            RescaleMethod::BoxCox => "boxcox",
            RescaleMethod::YeoJohnson => "yeojohnson",
            RescaleMethod::QuantileNormal => "quantile_normal",
            RescaleMethod::QuantileUniform => "quantile_uniform",
            RescaleMethod::Identity => "none",
        }
    }
}

impl fmt::Display for RescaleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RescaleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .chain([RescaleMethod::Identity])
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown rescaler {s:?}")))
    }
}

impl TryFrom<String> for RescaleMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RescaleMethod> for String {
    fn from(m: RescaleMethod) -> String {
        m.name().to_string()
    }
}

/// Per-feature statistics learned by [`fit_rescaler`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedStats {
    Stateless,
    Standard { mean: Vec<f64>, std: Vec<f64> },
    MinMax { min: Vec<f64>, max: Vec<f64> },
    MaxAbs { max_abs: Vec<f64> },
    Robust { q1: Vec<f64>, q3: Vec<f64> },
    LogNormal { sigma: Vec<f64> },
    Power { lambda: Vec<f64> },
    Quantile { levels: Vec<f64>, quantiles: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalerParams {
    pub method: RescaleMethod,
    pub n_features: usize,
    pub stats: FittedStats,
    /// Human-readable notes about degenerate features (e.g. zero variance).
    pub warnings: Vec<String>,
}

fn columns(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect()
}

fn require_positive(cols: &[Vec<f64>], method: RescaleMethod) -> Result<()> {
    for (j, col) in cols.iter().enumerate() {
        if let Some(v) = col.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain(format!(
                "{method} needs strictly positive data; feature {j} contains {v}"
            )));
        }
    }
    Ok(())
}

/// `1 / (1 + e^-x)`, kept strictly inside (0, 1) where f64 would round to
/// an endpoint.
pub fn logistic(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Box-Cox transform `(x^l - 1)/l`, `ln x` at `l = 0`.
pub fn box_cox(x: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        x.ln()
    } else if lambda.abs() < 1e-4 {
        (lambda * x.ln()).exp_m1() / lambda
    } else {
        (x.powf(lambda) - 1.0) / lambda
    }
}

/// Yeo-Johnson transform in its continuous standard form.
pub fn yeo_johnson(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda == 0.0 {
            y.ln_1p()
        } else {
            (lambda * y.ln_1p()).exp_m1() / lambda
        }
    } else if lambda == 2.0 {
        -(-y).ln_1p()
    } else {
        let p = 2.0 - lambda;
        -(p * (-y).ln_1p()).exp_m1() / p
    }
}

fn log_variance(values: Vec<f64>) -> f64 {
    let (_, sd) = mean_std(&values);
    2.0 * sd.ln()
}

/// Profile log-likelihood of Box-Cox at `lambda`.
pub fn box_cox_log_likelihood(col: &[f64], lambda: f64) -> f64 {
    let sum_log: f64 = col.iter().map(|v| v.ln()).sum();
    (lambda - 1.0) * sum_log - col.len() as f64 / 2.0 * log_variance(col.iter().map(|&v| box_cox(v, lambda)).collect())
}

/// Profile log-likelihood of Yeo-Johnson at `lambda`.
pub fn yeo_johnson_log_likelihood(col: &[f64], lambda: f64) -> f64 {
    let sum_log: f64 = col.iter().map(|v| v.signum() * v.abs().ln_1p()).sum();
    (lambda - 1.0) * sum_log
        - col.len() as f64 / 2.0 * log_variance(col.iter().map(|&v| yeo_johnson(v, lambda)).collect())
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|&v| v == col[0])
}

pub fn fit_rescaler(method: RescaleMethod, x: ArrayView2<f64>) -> Result<RescalerParams> {
    if x.nrows() < 2 {
        return Err(Error::Contract(format!("rescaler needs at least 2 samples, got {}", x.nrows())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("rescaler input contains non-finite values".into()));
    }
    let cols = columns(x);
    let mut warnings = Vec::new();
    let stats = match method {
        RescaleMethod::L2Norm | RescaleMethod::Logistic | RescaleMethod::Identity => FittedStats::Stateless,
        RescaleMethod::Standard => {
            let (mut mean, mut std) = (Vec::new(), Vec::new());
            for (j, col) in cols.iter().enumerate() {
                let (m, s) = mean_std(col);
                mean.push(m);
                if s == 0.0 {
                    warnings.push(format!("feature {j} has zero variance; std set to 1"));
                    std.push(1.0);
                } else {
                    std.push(s);
                }
            }
            FittedStats::Standard { mean, std }
        }
        RescaleMethod::MinMax => FittedStats::MinMax {
            min: cols.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect(),
            max: cols.iter().map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect(),
        },
        RescaleMethod::MaxAbs => FittedStats::MaxAbs {
            max_abs: cols.iter().map(|c| c.iter().fold(0.0, |a: f64, v| a.max(v.abs()))).collect(),
        },
        RescaleMethod::Robust => {
            let (mut q1, mut q3) = (Vec::new(), Vec::new());
            for (j, col) in cols.iter().enumerate() {
                let s = sorted_copy(col);
                let (a, b) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
                if b <= a {
                    return Err(Error::Domain(format!(
                        "RobustScaler needs Q3 > Q1; feature {j} has Q1 = Q3 = {a}"
                    )));
                }
                q1.push(a);
                q3.push(b);
            }
            FittedStats::Robust { q1, q3 }
        }
        RescaleMethod::LogNormal => {
            require_positive(&cols, method)?;
            let mut sigma = Vec::new();
            for (j, col) in cols.iter().enumerate() {
                let logs: Vec<f64> = col.iter().map(|v| v.ln()).collect();
                let (_, s) = mean_std(&logs);
                if s == 0.0 {
                    warnings.push(format!("feature {j} has constant log; sigma set to 1"));
                    sigma.push(1.0);
                } else {
                    sigma.push(s);
                }
            }
            FittedStats::LogNormal { sigma }
        }
        RescaleMethod::BoxCox | RescaleMethod::YeoJohnson => {
            if method == RescaleMethod::BoxCox {
                require_positive(&cols, method)?;
            }
            let lambda = cols
                .iter()
                .enumerate()
                .map(|(j, col)| {
                    if is_constant(col) {
                        warnings.push(format!("feature {j} is constant; lambda set to 1"));
                        1.0
                    } else if method == RescaleMethod::BoxCox {
                        golden_section_max(|l| box_cox_log_likelihood(col, l), -LAMBDA_BOUND, LAMBDA_BOUND, LAMBDA_TOL)
                    } else {
                        golden_section_max(|l| yeo_johnson_log_likelihood(col, l), -LAMBDA_BOUND, LAMBDA_BOUND, LAMBDA_TOL)
                    }
                })
                .collect();
            FittedStats::Power { lambda }
        }
        RescaleMethod::QuantileNormal | RescaleMethod::QuantileUniform => {
            let nq = x.nrows().min(MAX_QUANTILES);
            let levels: Vec<f64> = (0..nq).map(|k| k as f64 / (nq - 1) as f64).collect();
            let quantiles = cols
                .iter()
                .map(|col| {
                    let s = sorted_copy(col);
                    let mut q: Vec<f64> = levels.iter().map(|&l| quantile_sorted(&s, l)).collect();
                    for k in 1..q.len() {
                        q[k] = q[k].max(q[k - 1]);
                    }
                    q
                })
                .collect();
            FittedStats::Quantile { levels, quantiles }
        }
    };
    Ok(RescalerParams { method, n_features: x.ncols(), stats, warnings })
}

/// Empirical CDF position of `v` against a non-decreasing quantile grid,
/// averaging the positions of tied grid values.
fn interpolate_cdf(v: f64, quantiles: &[f64], levels: &[f64]) -> f64 {
    let last = quantiles.len() - 1;
    if v < quantiles[0] {
        return 0.0;
    }
    if v > quantiles[last] {
        return 1.0;
    }
    let hi = quantiles.partition_point(|&q| q <= v);
    if quantiles[hi - 1] == v {
        return tied_level(v, quantiles, levels);
    }
    let lo = hi - 1;
    let t = (v - quantiles[lo]) / (quantiles[hi] - quantiles[lo]);
    levels[lo] + t * (levels[hi] - levels[lo])
}

fn tied_level(v: f64, quantiles: &[f64], levels: &[f64]) -> f64 {
    let first = quantiles.partition_point(|&q| q < v);
    let end = quantiles.partition_point(|&q| q <= v);
    0.5 * (levels[first] + levels[end - 1])
}

pub fn apply_rescaler(params: &RescalerParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != params.n_features {
        return Err(Error::Contract(format!(
            "rescaler fitted on {} features, got {}",
            params.n_features,
            x.ncols()
        )));
    }
    let mut out = x.to_owned();
    match (&params.stats, params.method) {
        (FittedStats::Stateless, RescaleMethod::Identity) => {}
        (FittedStats::Stateless, RescaleMethod::Logistic) => out.mapv_inplace(logistic),
        (FittedStats::Stateless, RescaleMethod::L2Norm) => {
            for mut row in out.rows_mut() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.mapv_inplace(|v| v / norm);
                }
            }
        }
        (stats, method) => {
            for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
                let f: Box<dyn Fn(f64) -> Result<f64>> = match stats {
                    FittedStats::Standard { mean, std } => {
                        let (m, s) = (mean[j], std[j]);
                        Box::new(move |v| Ok((v - m) / s))
                    }
                    FittedStats::MinMax { min, max } => {
                        let (lo, range) = (min[j], max[j] - min[j]);
                        Box::new(move |v| Ok(if range > 0.0 { (v - lo) / range } else { 0.0 }))
                    }
                    FittedStats::MaxAbs { max_abs } => {
                        let m = max_abs[j];
                        Box::new(move |v| Ok(if m > 0.0 { v / m } else { 0.0 }))
                    }
                    FittedStats::Robust { q1, q3 } => {
                        let (a, b) = (q1[j], q3[j]);
                        Box::new(move |v| Ok((v - a) / (b - a)))
                    }
                    FittedStats::LogNormal { sigma } => {
                        let s = sigma[j];
                        Box::new(move |v| {
                            if !(v > 0.0) {
                                return Err(Error::Domain(format!(
                                    "lognormal needs strictly positive data; feature {j} contains {v}"
                                )));
                            }
                            Ok(normal_cdf(v.ln() / s))
                        })
                    }
                    FittedStats::Power { lambda } => {
                        let l = lambda[j];
                        if method == RescaleMethod::BoxCox {
                            Box::new(move |v| {
                                if !(v > 0.0) {
                                    return Err(Error::Domain(format!(
                                        "boxcox needs strictly positive data; feature {j} contains {v}"
                                    )));
                                }
                                Ok(box_cox(v, l))
                            })
                        } else {
                            Box::new(move |v| Ok(yeo_johnson(v, l)))
                        }
                    }
                    FittedStats::Quantile { levels, quantiles } => {
                        let q = &quantiles[j];
                        let normal = method == RescaleMethod::QuantileNormal;
                        Box::new(move |v| {
                            let p = interpolate_cdf(v, q, levels);
                            if normal {
                                normal_quantile(p.clamp(QUANTILE_CLIP, 1.0 - QUANTILE_CLIP))
                            } else {
                                Ok(p)
                            }
                        })
                    }
                    FittedStats::Stateless => unreachable!("stateless methods handled above"),
                };
                for v in col.iter_mut() {
                    *v = f(*v)?;
                }
            }
        }
    }
    Ok(out)
}
