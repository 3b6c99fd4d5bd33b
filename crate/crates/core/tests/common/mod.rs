//! Synthetic datasets shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use qkm_core::bench::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Isotropic Gaussian blobs, `per_class` points around each center.
pub fn gaussian_blobs(centers: &[Vec<f64>], per_class: usize, sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let d = centers[0].len();
    let n = centers.len() * per_class;
    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for p in 0..per_class {
            let row = c * per_class + p;
            for j in 0..d {
                x[(row, j)] = center[j] + noise.sample(&mut rng);
            }
            y.push(c);
        }
    }
    Dataset::from_arrays(x, y).unwrap()
}

/// Centers of a triangle with the given side length.
pub fn triangle(side: f64) -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![side, 0.0], vec![side / 2.0, side * 3f64.sqrt() / 2.0]]
}

/// Mixture of Gaussians: the first `informative` columns carry class centers
/// drawn at least `min_gap` apart inside a cube of half-width max(4, min_gap), the rest are noise; every column then gets
/// its own positive scale and offset.
pub fn mixture(n: usize, n_classes: usize, n_features: usize, informative: usize, min_gap: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let half = 4f64.max(min_gap);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < n_classes {
        let c: Vec<f64> = (0..informative).map(|_| rng.random_range(-half..half)).collect();
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_gap);
        if far {
            centers.push(c);
        }
    }
    let scales: Vec<(f64, f64)> = (0..n_features).map(|_| (rng.random_range(0.5..20.0), rng.random_range(0.0..50.0))).collect();
    let mut x = Array2::zeros((n, n_features));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_classes;
        for j in 0..n_features {
            let base = if j < informative { centers[c][j] } else { 0.0 };
            x[(i, j)] = (base + unit.sample(&mut rng)) * scales[j].0 + scales[j].1;
        }
        y.push(c);
    }
    Dataset::from_arrays(x, y).unwrap()
}

/// Labels are the sign of feature 0; the other features are seeded noise.
pub fn sign_fixture(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let y = x.column(0).iter().map(|&v| usize::from(v > 0.0)).collect();
    (x, y)
}

pub fn write_csv(ds: &Dataset, path: &std::path::Path) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = ds.feature_names.clone();
    header.push("label".into());
    w.write_record(&header).unwrap();
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.label_names[ds.labels[i]].clone());
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}
