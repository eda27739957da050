//! Sparse labelled datasets, the LIBSVM text format and the l1-logistic model.

mod libsvm;
mod logreg;
pub mod synthetic;

pub use libsvm::{fingerprint, load_libsvm, parse_libsvm, read_maybe_gzip, write_libsvm};
pub use logreg::{logistic_loss, LogRegProblem, SparseGradient};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed token {token:?}: {reason}")]
    Malformed {
        line: usize,
        token: String,
        reason: &'static str,
    },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: duplicate feature index {index}")]
    DuplicateIndex { line: usize, index: usize },
    #[error("feature index {index} out of range for {num_features} features")]
    IndexOutOfRange { index: usize, num_features: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("degenerate split: {train} training and {test} test rows")]
    DegenerateSplit { train: usize, test: usize },
}

/// One sample: ascending 0-based feature ids, values and a ±1 label.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub label: f64,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub label: f64,
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl RowView<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&j, &a) in self.indices.iter().zip(self.values) {
            s += a * x[j];
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Row-compressed sparse design matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    num_features: usize,
    labels: Vec<f64>,
    row_ptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Dataset {
    /// `num_features` defaults to the largest index plus one.
    pub fn from_rows(
        name: impl Into<String>,
        rows: Vec<SparseRow>,
        num_features: Option<usize>,
    ) -> Result<Self, DataError> {
        let max_index = rows
            .iter()
            .filter_map(|r| r.indices.last().copied())
            .max();
        let inferred = max_index.map_or(0, |m| m + 1);
        let num_features = match num_features {
            Some(n) => {
                if let Some(m) = max_index {
                    if m >= n {
                        return Err(DataError::IndexOutOfRange {
                            index: m,
                            num_features: n,
                        });
                    }
                }
                n
            }
            None => inferred,
        };
        let mut ds = Dataset {
            name: name.into(),
            num_features,
            labels: Vec::with_capacity(rows.len()),
            row_ptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        };
        for r in rows {
            debug_assert_eq!(r.indices.len(), r.values.len());
            ds.labels.push(r.label);
            ds.indices.extend_from_slice(&r.indices);
            ds.values.extend_from_slice(&r.values);
            ds.row_ptr.push(ds.indices.len());
        }
        Ok(ds)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        RowView {
            label: self.labels[i],
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = RowView<'_>> {
        (0..self.num_samples()).map(move |i| self.row(i))
    }

    pub fn to_rows(&self) -> Vec<SparseRow> {
        self.rows()
            .map(|r| SparseRow {
                label: r.label,
                indices: r.indices.to_vec(),
                values: r.values.to_vec(),
            })
            .collect()
    }

    /// Widens (or checks) the feature dimension.
    pub fn with_num_features(mut self, n: usize) -> Result<Self, DataError> {
        if let Some(&m) = self.indices.iter().max() {
            if m >= n {
                return Err(DataError::IndexOutOfRange {
                    index: m,
                    num_features: n,
                });
            }
        }
        self.num_features = n;
        Ok(self)
    }

    pub fn subset(&self, rows: &[usize], name: impl Into<String>) -> Dataset {
        let picked = rows
            .iter()
            .map(|&i| {
                let r = self.row(i);
                SparseRow {
                    label: r.label,
                    indices: r.indices.to_vec(),
                    values: r.values.to_vec(),
                }
            })
            .collect();
        Dataset::from_rows(name, picked, Some(self.num_features)).expect("rows come from a valid dataset")
    }
}

/// Seeded shuffle, then the first `round(fraction · N)` rows train. Each side
/// keeps the original row order.
pub fn split_train_test<R: Rng + ?Sized>(
    dataset: &Dataset,
    fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    let n = dataset.num_samples();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(DataError::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let base = dataset.name();
    Ok((
        dataset.subset(&train, format!("{base}.train")),
        dataset.subset(&test, format!("{base}.test")),
    ))
}

/// Fraction of rows with `sign(⟨a_i, x⟩) = b_i`; a zero margin predicts +1.
pub fn accuracy(x: &[f64], dataset: &Dataset) -> Result<f64, DataError> {
    let n = dataset.num_samples();
    if n == 0 {
        return Err(DataError::Empty);
    }
    let correct = dataset
        .rows()
        .filter(|r| {
            let pred = if r.dot(x) >= 0.0 { 1.0 } else { -1.0 };
            pred == r.label
        })
        .count();
    Ok(correct as f64 / n as f64)
}

/// Number of exactly nonzero entries.
pub fn nnz(x: &[f64]) -> usize {
    x.iter().filter(|&&v| v != 0.0).count()
}
