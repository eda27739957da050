//! Plain proximal SGD and Prox-SVRG.

use super::seqn::{assemble, check_start, tag, Outcome};
use super::{default_batch, Monitor, RunResult, RunStatus, SgdStep, SolverConfig, SolverError, StepPlan, Tracker};
use crate::linalg;
use crate::oracles::{minibatch_gradient, sample_without_replacement, svrg_gradient, FiniteSumProblem, SvrgSnapshot};
use crate::prox::{ProxFunction, ScaledMetric};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prox_step(phi: &dyn ProxFunction, x: &[f64], v: &[f64], lambda: f64) -> Result<Vec<f64>, SolverError> {
    let next = phi.prox(ScaledMetric::new(lambda)?, &linalg::add_scaled(x, -lambda, v));
    if !linalg::all_finite(&next) {
        return Err(SolverError::NonFinite {
            what: "iterate",
            iteration: 0,
        });
    }
    Ok(next)
}

fn plan_of(lambda: f64) -> StepPlan {
    StepPlan {
        lambda,
        lambda_plus: lambda,
        alpha: 0.0,
        beta: 0.0,
    }
}

/// `x⁺ = prox_{λ_k φ}(x − λ_k ∇f_S(x))` with a fresh sample each step.
pub fn run_prox_sgd(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x0: &[f64],
    config: &SolverConfig,
    monitor: &Monitor,
) -> Result<RunResult, SolverError> {
    check_start(problem, x0, config)?;
    let n = problem.num_components();
    let b = config.batch.unwrap_or_else(|| default_batch(n)).min(n);
    let schedule = config.sgd_step.unwrap_or(SgdStep::Decaying(1.0 / problem.lipschitz_avg()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = Tracker::new(problem, phi, monitor, config.tol, config.epochs);
    let mut x = x0.to_vec();
    let mut step_norms = Vec::new();
    let mut k = 0usize;
    let mut lambda = match schedule {
        SgdStep::Constant(l) | SgdStep::Decaying(l) => l,
    };
    let status = if tracker.record(&x, 0)? {
        RunStatus::Converged
    } else {
        loop {
            if config.max_iterations.is_some_and(|m| k >= m) {
                break if tracker.finish(&x, k)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
            }
            lambda = match schedule {
                SgdStep::Constant(l) => l,
                SgdStep::Decaying(c) => c / ((k + 1) as f64).sqrt(),
            };
            let s = sample_without_replacement(&mut rng, n, b)?;
            let v = minibatch_gradient(problem, &x, &s)?;
            let next = prox_step(phi, &x, &v, lambda).map_err(|e| tag(e, k))?;
            step_norms.push(linalg::dist_sq(&next, &x));
            tracker.charge(s.len());
            x = next;
            k += 1;
            if tracker.boundary_crossed() && tracker.record(&x, k)? {
                break RunStatus::Converged;
            }
            if tracker.exhausted() {
                break if tracker.finish(&x, k)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
            }
        }
    };
    let out = Outcome {
        x,
        status,
        iterations: k,
        ifo_per_cycle: Vec::new(),
        step_norms_sq: step_norms,
        history: None,
        sample_output: false,
        last_plan: Some(plan_of(lambda)),
        certificate: 1.0,
        subspace_phases: 0,
        subspace_iterations: 0,
    };
    assemble(tracker, out, false, &mut rng)
}

/// Prox-SVRG: unit batches, `⌊1.5N⌋` inner steps, step `1/L_f` unless
/// overridden.
pub fn run_prox_svrg(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x0: &[f64],
    config: &SolverConfig,
    monitor: &Monitor,
) -> Result<RunResult, SolverError> {
    check_start(problem, x0, config)?;
    let n = problem.num_components();
    let b = config.batch.unwrap_or(1).min(n);
    let inner = config.inner_iterations.unwrap_or((3 * n / 2).max(1));
    let lambda = match config.sgd_step {
        Some(SgdStep::Constant(l)) => l,
        _ => 1.0 / problem.lipschitz_avg(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = Tracker::new(problem, phi, monitor, config.tol, config.epochs);
    let mut x = x0.to_vec();
    let mut step_norms = Vec::new();
    let mut ifo_per_cycle = Vec::new();
    let mut k = 0usize;
    let status = if tracker.record(&x, 0)? {
        RunStatus::Converged
    } else {
        'outer: loop {
            if tracker.exhausted() {
                break if tracker.finish(&x, k)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
            }
            let snap = SvrgSnapshot::new(problem, x.clone())?;
            tracker.charge(n);
            let mut cycle = n as u64;
            for _ in 0..inner {
                if config.max_iterations.is_some_and(|m| k >= m) {
                    break 'outer if tracker.finish(&x, k)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
                }
                let s = sample_without_replacement(&mut rng, n, b)?;
                let v = svrg_gradient(problem, &x, &s, &snap)?;
                let next = prox_step(phi, &x, &v, lambda).map_err(|e| tag(e, k))?;
                step_norms.push(linalg::dist_sq(&next, &x));
                tracker.charge(s.len());
                cycle += s.len() as u64;
                x = next;
                k += 1;
                if tracker.boundary_crossed() && tracker.record(&x, k)? {
                    break 'outer RunStatus::Converged;
                }
                if tracker.exhausted() {
                    break 'outer if tracker.finish(&x, k)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
                }
            }
            ifo_per_cycle.push(cycle);
        }
    };
    let out = Outcome {
        x,
        status,
        iterations: k,
        ifo_per_cycle,
        step_norms_sq: step_norms,
        history: None,
        sample_output: false,
        last_plan: Some(plan_of(lambda)),
        certificate: 1.0,
        subspace_phases: 0,
        subspace_iterations: 0,
    };
    assemble(tracker, out, false, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;
    use crate::prox::L1Norm;
    use crate::solver::{run_reference, Method, ReferenceOptions};

    fn toy() -> QuadraticProblem {
        QuadraticProblem::new(
            vec![vec![1.0, -2.0], vec![0.5, 1.0], vec![-1.0, 0.0], vec![2.0, 2.0]],
            vec![1.0, 0.5, 2.0, 1.5],
        )
    }

    #[test]
    fn full_batch_svrg_is_proximal_gradient() {
        let p = toy();
        let phi = L1Norm::new(0.2);
        let cfg = SolverConfig {
            method: Method::ProxSvrg,
            batch: Some(4),
            inner_iterations: Some(1),
            max_iterations: Some(5),
            epochs: 1e9,
            tol: 1e-300,
            ..SolverConfig::default()
        };
        let r = run_prox_svrg(&p, &phi, &[0.0, 0.0], &cfg, &Monitor::default()).unwrap();
        let lam = 1.0 / p.lipschitz_avg();
        let mut x = vec![0.0, 0.0];
        for _ in 0..5 {
            let g = crate::oracles::full_gradient(&p, &x).unwrap();
            x = prox_step(&phi, &x, &g, lam).unwrap();
        }
        assert_eq!(r.x, x);
        assert_eq!(r.ifo_per_cycle, vec![8; 5]);
    }

    #[test]
    fn svrg_converges_on_toy() {
        let p = toy();
        let phi = L1Norm::new(0.2);
        let star = run_reference(&p, &phi, &[0.0, 0.0], &ReferenceOptions::default()).unwrap();
        let cfg = SolverConfig {
            method: Method::ProxSvrg,
            epochs: 400.0,
            tol: 1e-10,
            ..SolverConfig::default()
        };
        let r = run_prox_svrg(&p, &phi, &[0.0, 0.0], &cfg, &Monitor::with_psi_star(star.psi_star)).unwrap();
        assert_eq!(r.status, RunStatus::Converged);
    }

    #[test]
    fn sgd_constant_full_batch_is_deterministic_prox_gradient() {
        let p = toy();
        let phi = L1Norm::new(0.0);
        let lam = 1.0 / p.lipschitz_avg();
        let cfg = SolverConfig {
            method: Method::ProxSgd,
            batch: Some(4),
            sgd_step: Some(SgdStep::Constant(lam)),
            max_iterations: Some(3),
            epochs: 1e9,
            tol: 1e-300,
            ..SolverConfig::default()
        };
        let r = run_prox_sgd(&p, &phi, &[0.0, 0.0], &cfg, &Monitor::default()).unwrap();
        let mut x = vec![0.0, 0.0];
        for _ in 0..3 {
            let g = crate::oracles::full_gradient(&p, &x).unwrap();
            x = linalg::add_scaled(&x, -lam, &g);
        }
        assert_eq!(r.x, x);
    }
}
