//! Small finite-sum problems used by tests, benches and auxiliary solves.

use crate::linalg;
use crate::oracles::FiniteSumProblem;

/// `f_i(x) = ½ s_i ‖x − c_i‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    centers: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
}

impl QuadraticProblem {
    pub fn new(centers: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        assert!(!centers.is_empty(), "need at least one component");
        assert_eq!(centers.len(), weights.len());
        let dim = centers[0].len();
        assert!(centers.iter().all(|c| c.len() == dim));
        assert!(weights.iter().all(|&w| w >= 0.0));
        Self { centers, weights, dim }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl FiniteSumProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_components(&self) -> usize {
        self.centers.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * self.weights[i] * linalg::dist_sq(x, &self.centers[i])
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * self.weights[i];
        for j in 0..self.dim {
            out[j] += c * (x[j] - self.centers[i][j]);
        }
    }

    fn component_lipschitz(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// `f_i(y) + ‖y − c‖² / (2θ)`; its minimizer together with `φ` is the
/// proximal point of `ψ` at `c`.
pub struct TiltedProblem<'a> {
    inner: &'a dyn FiniteSumProblem,
    center: Vec<f64>,
    theta: f64,
}

impl<'a> TiltedProblem<'a> {
    pub fn new(inner: &'a dyn FiniteSumProblem, center: Vec<f64>, theta: f64) -> Self {
        assert!(theta > 0.0);
        assert_eq!(center.len(), inner.dim());
        Self { inner, center, theta }
    }
}

impl FiniteSumProblem for TiltedProblem<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.inner.component_value(i, x) + linalg::dist_sq(x, &self.center) / (2.0 * self.theta)
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.add_component_gradient(i, x, scale, out);
        let c = scale / self.theta;
        for j in 0..x.len() {
            out[j] += c * (x[j] - self.center[j]);
        }
    }

    fn component_lipschitz(&self, i: usize) -> f64 {
        self.inner.component_lipschitz(i) + 1.0 / self.theta
    }

    // The inner floor at 1 would otherwise be applied before adding 1/θ.
    fn lipschitz_avg(&self) -> f64 {
        self.inner.lipschitz_avg() + 1.0 / self.theta
    }

    fn lipschitz_uniform(&self) -> f64 {
        self.inner.lipschitz_uniform() + 1.0 / self.theta
    }
}
