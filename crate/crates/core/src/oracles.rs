//! Gradient oracles for finite sums `f(x) = (1/N) Σ f_i(x)`.

use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("batch size {b} invalid for population {n}")]
    InvalidBatch { n: usize, b: usize },
    #[error("empty sample set")]
    EmptySample,
    #[error("sample index {index} out of range for {n} components")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate sample index {0}")]
    DuplicateIndex(usize),
    #[error("non-finite gradient contribution from component {0}")]
    NonFinite(usize),
    #[error("svrg oracle requires a snapshot")]
    MissingSnapshot,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A smooth finite-sum objective.
pub trait FiniteSumProblem: Send + Sync {
    fn dim(&self) -> usize;

    fn num_components(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// `out += scale · ∇f_i(x)`
    fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]);

    /// A Lipschitz constant of `∇f_i`.
    fn component_lipschitz(&self, i: usize) -> f64;

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_component_gradient(i, x, 1.0, &mut g);
        g
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        let mut s = 0.0;
        for i in 0..n {
            s += self.component_value(i, x);
        }
        s / n as f64
    }

    /// `L = max(max_i L_i, 1)`.
    fn lipschitz_uniform(&self) -> f64 {
        let mut l: f64 = 0.0;
        for i in 0..self.num_components() {
            l = l.max(self.component_lipschitz(i));
        }
        l.max(1.0)
    }

    /// `L_f = max(mean_i L_i, 1)`.
    fn lipschitz_avg(&self) -> f64 {
        let n = self.num_components();
        let mut s = 0.0;
        for i in 0..n {
            s += self.component_lipschitz(i);
        }
        (s / n as f64).max(1.0)
    }
}

/// Distinct component ids, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    indices: Vec<usize>,
}

impl SampleSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self, OracleError> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(OracleError::DuplicateIndex(w[0]));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(OracleError::IndexOutOfRange { index: last, n });
            }
        }
        Ok(Self { indices })
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn partial_fisher_yates<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    // Virtual pool [0, n); only displaced slots are stored.
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out
}

/// Uniform `b`-subset of `[0, n)`.
///
/// Partial Fisher–Yates for `b ≤ n/2`; otherwise the complement of an
/// `(n − b)`-subset is returned.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    b: usize,
) -> Result<SampleSet, OracleError> {
    if b == 0 || b > n {
        return Err(OracleError::InvalidBatch { n, b });
    }
    if b == n {
        return Ok(SampleSet::full(n));
    }
    let indices = if 2 * b <= n {
        let mut v = partial_fisher_yates(rng, n, b);
        v.sort_unstable();
        v
    } else {
        let mut excluded = vec![false; n];
        for i in partial_fisher_yates(rng, n, n - b) {
            excluded[i] = true;
        }
        (0..n).filter(|&i| !excluded[i]).collect()
    };
    Ok(SampleSet { indices })
}

fn check_point(problem: &dyn FiniteSumProblem, x: &[f64]) -> Result<(), OracleError> {
    if x.len() != problem.dim() {
        return Err(OracleError::DimensionMismatch {
            expected: problem.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

fn first_non_finite(problem: &dyn FiniteSumProblem, x: &[f64], indices: &[usize]) -> OracleError {
    for &i in indices {
        if !crate::linalg::all_finite(&problem.component_gradient(i, x)) {
            return OracleError::NonFinite(i);
        }
    }
    // The sum overflowed even though every term is finite; blame the last one.
    OracleError::NonFinite(indices.last().copied().unwrap_or(0))
}

/// Exact `∇f(x)`, summed in ascending component order.
pub fn full_gradient(problem: &dyn FiniteSumProblem, x: &[f64]) -> Result<Vec<f64>, OracleError> {
    check_point(problem, x)?;
    let n = problem.num_components();
    let scale = 1.0 / n as f64;
    let mut g = vec![0.0; problem.dim()];
    for i in 0..n {
        problem.add_component_gradient(i, x, scale, &mut g);
    }
    if !crate::linalg::all_finite(&g) {
        let all: Vec<usize> = (0..n).collect();
        return Err(first_non_finite(problem, x, &all));
    }
    Ok(g)
}

/// `∇f_S(x) = |S|⁻¹ Σ_{i∈S} ∇f_i(x)`.
pub fn minibatch_gradient(
    problem: &dyn FiniteSumProblem,
    x: &[f64],
    s: &SampleSet,
) -> Result<Vec<f64>, OracleError> {
    if s.is_empty() {
        return Err(OracleError::EmptySample);
    }
    check_point(problem, x)?;
    let scale = 1.0 / s.len() as f64;
    let mut g = vec![0.0; problem.dim()];
    for &i in s.indices() {
        problem.add_component_gradient(i, x, scale, &mut g);
    }
    if !crate::linalg::all_finite(&g) {
        return Err(first_non_finite(problem, x, s.indices()));
    }
    Ok(g)
}

/// Anchor point and its full gradient for the variance-reduced oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgSnapshot {
    pub anchor: Vec<f64>,
    pub anchor_gradient: Vec<f64>,
}

impl SvrgSnapshot {
    pub fn new(problem: &dyn FiniteSumProblem, anchor: Vec<f64>) -> Result<Self, OracleError> {
        let anchor_gradient = full_gradient(problem, &anchor)?;
        Ok(Self {
            anchor,
            anchor_gradient,
        })
    }
}

/// `∇f_S(x) − ∇f_S(x̃) + ∇f(x̃)`.
///
/// The two terms for each component are added back to back, so at
/// `x = x̃` they cancel exactly and the result is `∇f(x̃)` bit for bit.
pub fn svrg_gradient(
    problem: &dyn FiniteSumProblem,
    x: &[f64],
    s: &SampleSet,
    snap: &SvrgSnapshot,
) -> Result<Vec<f64>, OracleError> {
    if s.is_empty() {
        return Err(OracleError::EmptySample);
    }
    check_point(problem, x)?;
    check_point(problem, &snap.anchor)?;
    let scale = 1.0 / s.len() as f64;
    let mut g = vec![0.0; problem.dim()];
    for &i in s.indices() {
        problem.add_component_gradient(i, x, scale, &mut g);
        problem.add_component_gradient(i, &snap.anchor, -scale, &mut g);
    }
    for (gi, ai) in g.iter_mut().zip(&snap.anchor_gradient) {
        *gi += ai;
    }
    if !crate::linalg::all_finite(&g) {
        return Err(first_non_finite(problem, x, s.indices()));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Minibatch,
    Svrg,
}

/// Evaluates the oracle with a fixed sample set at an arbitrary point, so the
/// same randomness can be reused at a second point.
pub fn oracle_at(
    kind: OracleKind,
    problem: &dyn FiniteSumProblem,
    point: &[f64],
    s: &SampleSet,
    snap: Option<&SvrgSnapshot>,
) -> Result<Vec<f64>, OracleError> {
    match kind {
        OracleKind::Minibatch => minibatch_gradient(problem, point, s),
        OracleKind::Svrg => {
            let snap = snap.ok_or(OracleError::MissingSnapshot)?;
            svrg_gradient(problem, point, s, snap)
        }
    }
}
