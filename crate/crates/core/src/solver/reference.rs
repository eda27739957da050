//! Deterministic high-accuracy proximal-gradient solver used to compute `ψ*`.

use super::SolverError;
use crate::linalg;
use crate::oracles::{full_gradient, FiniteSumProblem};
use crate::prox::{ProxFunction, ScaledMetric};

/// `‖x − prox_φ(x − g)‖`, the natural residual with unit step.
pub fn exact_residual_norm(x: &[f64], g: &[f64], phi: &dyn ProxFunction) -> Result<f64, SolverError> {
    let p = phi.prox(ScaledMetric::new(1.0)?, &linalg::add_scaled(x, -1.0, g));
    Ok(linalg::norm(&linalg::sub(x, &p)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Target for `‖F^I(x)‖`.
    pub tol: f64,
    /// Relative objective change that counts as stalled.
    pub stall: f64,
    pub max_iterations: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            stall: 1e-12,
            max_iterations: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceResult {
    pub x: Vec<f64>,
    pub psi_star: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `x` is then the last iterate.
    pub converged: bool,
}

/// Monotone proximal gradient with Barzilai–Borwein trial steps and
/// backtracking on the quadratic upper model. Steps at or below `1/L_f` are
/// always accepted, so the method never does worse than the fixed-step
/// iteration.
pub fn run_reference(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x0: &[f64],
    opts: &ReferenceOptions,
) -> Result<ReferenceResult, SolverError> {
    if !(opts.tol > 0.0) {
        return Err(SolverError::InvalidConfig("reference tol must be positive".into()));
    }
    let l_f = problem.lipschitz_avg();
    let safe = 1.0 / l_f;
    let mut x = x0.to_vec();
    let mut g = full_gradient(problem, &x)?;
    let mut fx = problem.value(&x);
    let mut psi = fx + phi.value(&x);
    let mut res = exact_residual_norm(&x, &g, phi)?;
    let mut t = safe;
    let mut last_change = f64::INFINITY;

    for it in 0..opts.max_iterations {
        if res <= opts.tol && last_change <= opts.stall {
            return Ok(ReferenceResult {
                x,
                psi_star: psi,
                residual_norm: res,
                iterations: it,
                converged: true,
            });
        }
        if res == 0.0 {
            // Exact stationary point; nothing left to do.
            return Ok(ReferenceResult {
                x,
                psi_star: psi,
                residual_norm: res,
                iterations: it,
                converged: true,
            });
        }
        let (x_new, f_new) = loop {
            let step = ScaledMetric::new(t)?;
            let cand = phi.prox(step, &linalg::add_scaled(&x, -t, &g));
            let diff = linalg::sub(&cand, &x);
            let f_c = problem.value(&cand);
            let model = fx + linalg::dot(&g, &diff) + linalg::norm_sq(&diff) / (2.0 * t);
            if t <= safe || f_c <= model {
                break (cand, f_c);
            }
            t = (0.5 * t).max(safe);
        };
        if !linalg::all_finite(&x_new) || !f_new.is_finite() {
            return Err(SolverError::NonFinite {
                what: "reference iterate",
                iteration: it,
            });
        }
        let g_new = full_gradient(problem, &x_new)?;
        let psi_new = f_new + phi.value(&x_new);
        let s = linalg::sub(&x_new, &x);
        let y = linalg::sub(&g_new, &g);
        let sy = linalg::dot(&s, &y);
        t = if sy > 0.0 {
            (linalg::norm_sq(&s) / sy).clamp(safe, 1e6 * safe)
        } else {
            safe
        };
        last_change = (psi_new - psi).abs() / psi.abs().max(1.0);
        x = x_new;
        g = g_new;
        fx = f_new;
        psi = psi_new;
        res = exact_residual_norm(&x, &g, phi)?;
    }
    log::warn!("reference solve hit the iteration cap with residual {res:e}");
    Ok(ReferenceResult {
        x,
        psi_star: psi,
        residual_norm: res,
        iterations: opts.max_iterations,
        converged: res <= opts.tol,
    })
}
