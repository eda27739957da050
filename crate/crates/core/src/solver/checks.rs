//! Numerical evaluation of the one-step descent and point-distance bounds,
//! using exact gradients. Used by tests and the `verify` command.

use super::{run_reference, ReferenceOptions, SolverError, StepPlan};
use crate::linalg::{self, dot, norm_sq, sub};
use crate::oracles::{full_gradient, FiniteSumProblem};
use crate::problems::TiltedProblem;
use crate::prox::{ProxFunction, ScaledMetric};
use serde::Serialize;

const SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + SLACK,
        }
    }
}

/// `p₊ = prox_{λ₊}(x + αd − λ₊v₊)`
fn p_plus(phi: &dyn ProxFunction, x: &[f64], d: &[f64], v_plus: &[f64], plan: &StepPlan) -> Result<Vec<f64>, SolverError> {
    let mut arg = linalg::add_scaled(x, plan.alpha, d);
    linalg::axpy(-plan.lambda_plus, v_plus, &mut arg);
    Ok(phi.prox(ScaledMetric::new(plan.lambda_plus)?, &arg))
}

/// Bound on `2[ψ(p₊) − ψ(x)]` for arbitrary oracle values `v`, `v₊`.
/// `rho` defaults to `1/λ`.
#[allow(clippy::too_many_arguments)]
pub fn check_descent_inequality(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x: &[f64],
    d: &[f64],
    v: &[f64],
    v_plus: &[f64],
    plan: &StepPlan,
    rho: Option<f64>,
) -> Result<InequalityCheck, SolverError> {
    let StepPlan {
        lambda,
        lambda_plus,
        alpha,
        beta,
    } = *plan;
    let rho = rho.unwrap_or(1.0 / lambda);
    let l_f = problem.lipschitz_avg();
    let metric = ScaledMetric::new(lambda)?;
    let psi = |p: &[f64]| problem.value(p) + phi.value(p);

    let z = linalg::add_scaled(x, beta, d);
    let gx = full_gradient(problem, x)?;
    let gz = full_gradient(problem, &z)?;
    let pp = p_plus(phi, x, d, v_plus, plan)?;
    let p_v = phi.prox(metric, &linalg::add_scaled(x, -lambda, v));
    let p_exact = phi.prox(metric, &linalg::add_scaled(x, -lambda, &gx));
    let f_v = sub(x, &p_v);
    let f_exact = sub(x, &p_exact);
    let ell = lambda_plus * (alpha / lambda_plus + l_f * beta).powi(2);

    let noise_z = sub(&gz, v_plus);
    let cross: Vec<f64> = gx
        .iter()
        .zip(&gz)
        .zip(d)
        .map(|((a, b), di)| lambda_plus * (a - b) + alpha * di)
        .collect();

    let lhs = 2.0 * (psi(&pp) - psi(x));
    let rhs = norm_sq(&sub(&gx, v)) / rho
        + lambda_plus * norm_sq(&noise_z)
        + (1.0 / lambda_plus - 1.0 / lambda) * norm_sq(&f_v)
        + (l_f - 1.0 / lambda_plus) * linalg::dist_sq(&pp, x)
        + (rho - 1.0 / lambda) * linalg::dist_sq(&p_v, &p_exact)
        + ell * norm_sq(d)
        - norm_sq(&f_exact) / lambda
        + 2.0 * dot(&noise_z, &cross);
    Ok(InequalityCheck::new(lhs, rhs))
}

/// Bound on `‖p₊ − x̄‖²` with `x̄ = prox_{θψ}(x)` computed by the reference
/// solver, and `ρ₁ = L_f λ₊`, `ρ₂ = 1`.
#[allow(clippy::too_many_arguments)]
pub fn check_pointdiff_inequality(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x: &[f64],
    d: &[f64],
    v_plus: &[f64],
    plan: &StepPlan,
    theta: f64,
) -> Result<InequalityCheck, SolverError> {
    let l_f = problem.lipschitz_avg();
    let StepPlan {
        lambda_plus,
        alpha,
        beta,
        ..
    } = *plan;
    let tilted = TiltedProblem::new(problem, x.to_vec(), theta);
    let opts = ReferenceOptions {
        tol: 1e-13,
        stall: 1e-15,
        max_iterations: 100_000,
    };
    let reference = run_reference(&tilted, phi, x, &opts)?;
    if reference.residual_norm > 1e-10 {
        return Err(SolverError::InvalidConfig(format!(
            "proximal point solve did not converge (residual {:e})",
            reference.residual_norm
        )));
    }
    let x_bar = reference.x;

    let z = linalg::add_scaled(x, beta, d);
    let gz = full_gradient(problem, &z)?;
    let gbar = full_gradient(problem, &x_bar)?;
    let pp = p_plus(phi, x, d, v_plus, plan)?;
    let tau = 1.0 - lambda_plus / theta;
    let mu_s = alpha + l_f * beta * lambda_plus;
    let rho1 = l_f * lambda_plus;
    let rho2 = 1.0;
    let p: Vec<f64> = gbar
        .iter()
        .zip(&gz)
        .zip(d)
        .map(|((a, b), di)| lambda_plus * (a - b) + alpha * di)
        .collect();
    let bar_minus_x = sub(&x_bar, x);
    let lhs = linalg::dist_sq(&pp, &x_bar);
    let lead = (1.0 + rho1) * tau * tau + 2.0 * l_f * lambda_plus * tau + (1.0 + rho2) * (l_f * lambda_plus).powi(2);
    let left: Vec<f64> = bar_minus_x.iter().zip(&p).map(|(b, q)| tau * b - q).collect();
    let noise = sub(v_plus, &gz);
    let rhs = lead * norm_sq(&bar_minus_x)
        + (1.0 + 1.0 / rho1 + 1.0 / rho2) * mu_s * mu_s * norm_sq(d)
        + 2.0 * lambda_plus * dot(&left, &noise)
        + lambda_plus * lambda_plus * norm_sq(&noise);
    Ok(InequalityCheck::new(lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;
    use crate::prox::{residual, L1Norm};

    fn quad() -> QuadraticProblem {
        QuadraticProblem::new(vec![vec![1.0, -1.0], vec![0.5, 2.0], vec![-2.0, 0.0]], vec![1.0, 2.0, 0.5])
    }

    #[test]
    fn exact_step_with_zero_direction_is_prox_gradient_descent() {
        let p = quad();
        let phi = L1Norm::new(0.3);
        let x = [2.0, -1.5];
        let g = full_gradient(&p, &x).unwrap();
        let lam = 1.0 / p.lipschitz_avg();
        let plan = StepPlan {
            lambda: lam,
            lambda_plus: lam,
            alpha: 0.0,
            beta: 0.0,
        };
        let c = check_descent_inequality(&p, &phi, &x, &[0.0, 0.0], &g, &g, &plan, None).unwrap();
        assert!(c.holds && c.lhs < 0.0, "{c:?}");
    }

    #[test]
    fn extra_step_with_exact_gradients() {
        let p = quad();
        let phi = L1Norm::new(0.1);
        let x = [0.3, 0.9];
        let lam = 1.0 / p.lipschitz_avg();
        let plan = StepPlan {
            lambda: lam,
            lambda_plus: lam,
            alpha: 1.0,
            beta: 1.0,
        };
        let g = full_gradient(&p, &x).unwrap();
        let f = residual(&x, &g, ScaledMetric::new(lam).unwrap(), &phi).unwrap();
        let d: Vec<f64> = f.iter().map(|v| -v).collect();
        let z = linalg::add_scaled(&x, 1.0, &d);
        let gz = full_gradient(&p, &z).unwrap();
        assert!(check_descent_inequality(&p, &phi, &x, &d, &g, &gz, &plan, None).unwrap().holds);
    }

    #[test]
    fn pointdiff_trivial_case() {
        let p = quad();
        let phi = L1Norm::new(0.0);
        let l_f = p.lipschitz_avg();
        // x is the minimizer, so x̄ = x.
        let r = run_reference(&p, &phi, &[0.0, 0.0], &ReferenceOptions::default()).unwrap();
        let g = full_gradient(&p, &r.x).unwrap();
        let plan = StepPlan {
            lambda: 1.0 / (6.0 * l_f),
            lambda_plus: 1.0 / (6.0 * l_f),
            alpha: 0.0,
            beta: 0.0,
        };
        let c = check_pointdiff_inequality(&p, &phi, &r.x, &[0.0, 0.0], &g, &plan, 1.0 / (3.0 * l_f)).unwrap();
        assert!(c.holds && c.lhs < 1e-20, "{c:?}");
    }
}
