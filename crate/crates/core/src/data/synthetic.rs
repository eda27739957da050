//! Seeded synthetic logistic-regression datasets.
//!
//! Labels are drawn as `b = +1` with probability `σ(⟨a, w*⟩)` for a sparse
//! ground-truth `w*`.

use super::{Dataset, SparseRow};
use rand::seq::index::{sample, sample_weighted};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn draw_label<R: Rng>(rng: &mut R, margin: f64) -> f64 {
    let p = 1.0 / (1.0 + (-margin).exp());
    if rng.random::<f64>() < p {
        1.0
    } else {
        -1.0
    }
}

fn sparse_truth<R: Rng>(rng: &mut R, features: usize, support: usize, signal: f64) -> Vec<f64> {
    let mut w = vec![0.0; features];
    for j in sample(rng, features, support.min(features)) {
        let g: f64 = StandardNormal.sample(rng);
        w[j] = signal * g;
    }
    w
}

/// Dense Gaussian features with AR(1) correlation `ρ` between neighbouring
/// columns, scaled so that `E‖a‖² = features · scale²`.
#[derive(Debug, Clone)]
pub struct DenseSpec {
    pub samples: usize,
    pub features: usize,
    pub correlation: f64,
    pub scale: f64,
    pub support: usize,
    pub signal: f64,
    pub seed: u64,
}

impl DenseSpec {
    pub fn new(samples: usize, features: usize, seed: u64) -> Self {
        Self {
            samples,
            features,
            correlation: 0.0,
            scale: 1.0,
            support: (features / 4).max(1),
            signal: 1.0,
            seed,
        }
    }
}

pub fn dense_logistic(spec: &DenseSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = sparse_truth(&mut rng, spec.features, spec.support, spec.signal);
    let rho = spec.correlation;
    let tail = (1.0 - rho * rho).sqrt();
    let rows = (0..spec.samples)
        .map(|_| {
            let mut values = Vec::with_capacity(spec.features);
            let mut prev = 0.0;
            for j in 0..spec.features {
                let g: f64 = StandardNormal.sample(&mut rng);
                prev = if j == 0 { g } else { rho * prev + tail * g };
                values.push(spec.scale * prev);
            }
            let margin: f64 = values.iter().zip(&w).map(|(a, b)| a * b).sum();
            SparseRow {
                label: draw_label(&mut rng, margin),
                indices: (0..spec.features).collect(),
                values,
            }
        })
        .collect();
    Dataset::from_rows(format!("dense-{}x{}-s{}", spec.samples, spec.features, spec.seed), rows, Some(spec.features))
        .expect("generated indices are in range")
}

/// Text-like sparse rows: `row_nnz` features per row drawn with Zipf-like
/// popularity, positive values, every row scaled to norm `row_norm`.
#[derive(Debug, Clone)]
pub struct SparseSpec {
    pub samples: usize,
    pub features: usize,
    pub row_nnz: usize,
    pub row_norm: f64,
    pub support: usize,
    pub signal: f64,
    pub seed: u64,
}

impl SparseSpec {
    pub fn new(samples: usize, features: usize, seed: u64) -> Self {
        Self {
            samples,
            features,
            row_nnz: 40,
            row_norm: 1.0,
            support: (features / 20).max(1),
            signal: 10.0,
            seed,
        }
    }
}

pub fn sparse_logistic(spec: &SparseSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = sparse_truth(&mut rng, spec.features, spec.support, spec.signal);
    let k = spec.row_nnz.min(spec.features);
    let rows = (0..spec.samples)
        .map(|_| {
            let picked = sample_weighted(&mut rng, spec.features, |j| 1.0 / (j as f64 + 1.0).powf(0.8), k)
                .expect("weights are positive");
            let mut indices: Vec<usize> = picked.into_iter().collect();
            indices.sort_unstable();
            let mut values: Vec<f64> = indices
                .iter()
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g.abs() + 0.1
                })
                .collect();
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt() / spec.row_norm;
            for v in values.iter_mut() {
                *v /= norm;
            }
            let margin: f64 = indices.iter().zip(&values).map(|(&j, a)| a * w[j]).sum();
            SparseRow {
                label: draw_label(&mut rng, margin),
                indices,
                values,
            }
        })
        .collect();
    Dataset::from_rows(format!("sparse-{}x{}-s{}", spec.samples, spec.features, spec.seed), rows, Some(spec.features))
        .expect("generated indices are in range")
}
