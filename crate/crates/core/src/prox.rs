//! Proximity operators for scaled-identity metrics, the Moreau envelope of
//! the l1 norm and the (inexact) natural residual.

use crate::linalg;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("metric parameter must be positive and finite, got {0}")]
    InvalidMetric(f64),
}

/// The metric `Λ = λ⁻¹ I`. Larger `lambda` means a longer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMetric {
    lambda: f64,
}

impl ScaledMetric {
    pub fn new(lambda: f64) -> Result<Self, ProxError> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(ProxError::InvalidMetric(lambda))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// A convex function with an inexpensive proximity operator.
///
/// `prox_into` must write `argmin_y φ(y) + ‖x − y‖² / (2λ)`.
pub trait ProxFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn prox_into(&self, metric: ScaledMetric, x: &[f64], out: &mut [f64]);

    fn prox(&self, metric: ScaledMetric, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.prox_into(metric, x, &mut out);
        out
    }

    fn name(&self) -> &'static str;
}

/// `φ(x) = μ‖x‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    pub mu: f64,
}

impl L1Norm {
    pub fn new(mu: f64) -> Self {
        assert!(mu >= 0.0, "l1 weight must be nonnegative");
        Self { mu }
    }
}

impl ProxFunction for L1Norm {
    fn value(&self, x: &[f64]) -> f64 {
        self.mu * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox_into(&self, metric: ScaledMetric, x: &[f64], out: &mut [f64]) {
        soft_threshold_into(x, metric.lambda * self.mu, out);
    }

    fn name(&self) -> &'static str {
        "l1"
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroFunction;

impl ProxFunction for ZeroFunction {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn prox_into(&self, _metric: ScaledMetric, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn name(&self) -> &'static str {
        "zero"
    }
}

#[inline]
fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

pub fn soft_threshold_into(x: &[f64], tau: f64, out: &mut [f64]) {
    debug_assert!(tau >= 0.0);
    for (o, &v) in out.iter_mut().zip(x) {
        *o = shrink(v, tau);
    }
}

/// `sign(x_i) · max(|x_i| − τ, 0)`, with exact zeros inside `[−τ, τ]`.
pub fn soft_threshold(x: &[f64], tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    soft_threshold_into(x, tau, &mut out);
    out
}

fn check_dims(x: &[f64], v: &[f64]) -> Result<(), ProxError> {
    if x.len() != v.len() {
        return Err(ProxError::DimensionMismatch {
            expected: x.len(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `F^Λ_v(x) = x − prox^Λ_φ(x − λ v)`.
pub fn residual(
    x: &[f64],
    v: &[f64],
    metric: ScaledMetric,
    phi: &dyn ProxFunction,
) -> Result<Vec<f64>, ProxError> {
    check_dims(x, v)?;
    let shifted = linalg::add_scaled(x, -metric.lambda, v);
    let p = phi.prox(metric, &shifted);
    Ok(linalg::sub(x, &p))
}

/// Huber form of `min_y μ‖y‖₁ + ‖x − y‖² / (2λ)`.
pub fn moreau_envelope(x: &[f64], metric: ScaledMetric, phi: &L1Norm) -> f64 {
    let lambda = metric.lambda;
    let tau = lambda * phi.mu;
    let mut s = 0.0;
    for &t in x {
        let a = t.abs();
        s += if a <= tau {
            t * t / (2.0 * lambda)
        } else {
            phi.mu * a - lambda * phi.mu * phi.mu / 2.0
        };
    }
    s
}

/// `λ⁻¹ (x − prox(x))`, the gradient of the envelope.
pub fn moreau_envelope_gradient(x: &[f64], metric: ScaledMetric, phi: &dyn ProxFunction) -> Vec<f64> {
    let p = phi.prox(metric, x);
    let inv = 1.0 / metric.lambda;
    x.iter().zip(&p).map(|(a, b)| inv * (a - b)).collect()
}

/// For each `δ`, returns `δ⁻¹‖F^{δ⁻¹I}_v(x)‖`, which is nonincreasing in `δ`.
pub fn residual_scaling_check(
    x: &[f64],
    v: &[f64],
    phi: &dyn ProxFunction,
    deltas: &[f64],
) -> Result<Vec<f64>, ProxError> {
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let metric = ScaledMetric::new(delta)?;
        let f = residual(x, v, metric, phi)?;
        out.push(linalg::norm(&f) / delta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(l: f64) -> ScaledMetric {
        ScaledMetric::new(l).unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0, -0.5, 0.0], 1.0), vec![2.0, 0.0, 0.0]);
        let x = [0.7, -1.3, 0.0, 1e-300];
        assert_eq!(soft_threshold(&x, 0.0), x.to_vec());
        let phi = L1Norm::new(0.25);
        assert_eq!(phi.prox(m(2.0), &[0.3]), vec![0.0]);
    }

    #[test]
    fn metric_rejects_bad_lambda() {
        assert!(ScaledMetric::new(0.0).is_err());
        assert!(ScaledMetric::new(f64::INFINITY).is_err());
        assert!(ScaledMetric::new(-1.0).is_err());
    }

    #[test]
    fn residual_of_zero_function_is_scaled_v() {
        let x = [1.0, 2.0, -3.0];
        let v = [0.5, -0.25, 4.0];
        let r = residual(&x, &v, m(0.5), &ZeroFunction).unwrap();
        for i in 0..3 {
            assert!((r[i] - 0.5 * v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_hand_evaluated() {
        // x − soft(x − v, λμ) with x=[1,0], v=[0.5,0.1], λ=1, μ=0.2:
        // x − v = [0.5, −0.1] → soft(·, 0.2) = [0.3, 0] → F = [0.7, 0].
        let r = residual(&[1.0, 0.0], &[0.5, 0.1], m(1.0), &L1Norm::new(0.2)).unwrap();
        assert!((r[0] - 0.7).abs() < 1e-15);
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let err = residual(&[1.0], &[1.0, 2.0], m(1.0), &ZeroFunction).unwrap_err();
        assert_eq!(err, ProxError::DimensionMismatch { expected: 1, found: 2 });
    }

    #[test]
    fn stationary_point_has_zero_residual() {
        let r = residual(&[2.0, -1.0], &[0.0, 0.0], m(3.0), &ZeroFunction).unwrap();
        assert!(linalg::is_zero(&r));
    }

    #[test]
    fn envelope_examples() {
        let phi = L1Norm::new(1.0);
        assert_eq!(moreau_envelope(&[0.0, 0.0], m(1.0), &phi), 0.0);
        assert_eq!(moreau_envelope(&[3.0, -2.0], m(0.7), &L1Norm::new(0.0)), 0.0);
        // Brute force: min over a fine grid of |y| + (2 − y)² / 2.
        let mut best = f64::INFINITY;
        for k in 0..=400_000 {
            let y = -1.0 + 4.0 * k as f64 / 400_000.0;
            best = best.min(y.abs() + 0.5 * (2.0 - y) * (2.0 - y));
        }
        let env = moreau_envelope(&[2.0], m(1.0), &phi);
        assert_eq!(env, 1.5);
        assert!((env - best).abs() < 1e-9);
    }

    #[test]
    fn scaling_check_constant_for_zero_function() {
        let v = [3.0, 4.0];
        let s = residual_scaling_check(&[1.0, 1.0], &v, &ZeroFunction, &[0.1, 0.5, 1.0, 2.0]).unwrap();
        for val in s {
            assert!((val - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_check_zero_at_fixed_point() {
        let s = residual_scaling_check(&[0.0, 0.0], &[0.0, 0.0], &L1Norm::new(1.0), &[0.5, 1.0]).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn semigroup_property() {
        let x = [2.5, -0.3, 0.9, -4.0];
        let a = soft_threshold(&soft_threshold(&x, 0.4), 0.7);
        let b = soft_threshold(&x, 1.1);
        for i in 0..x.len() {
            assert!((a[i] - b[i]).abs() < 1e-15);
        }
    }
}
