use super::policy::adaptive_initial;
use super::step::{complete_step, prepare_step, OracleSetup, StepOptions};
use super::{
    default_batch, policy_a_theory, policy_adaptive, policy_b_decaying_alpha, policy_c_params, run_prox_sgd,
    run_prox_svrg, sample_output, DirectionKind, Method, Monitor, PolicyKind, RunResult, RunStatus, SolverConfig,
    SolverError, StepPlan, Tracker,
};
use crate::directions::{CoordLbfgsDirection, DirectionGenerator, IdentityDirection, LbfgsDirection};
use crate::linalg;
use crate::oracles::{FiniteSumProblem, OracleKind, SvrgSnapshot};
use crate::prox::ProxFunction;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Runs the configured method from `x0`.
pub fn run(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x0: &[f64],
    config: &SolverConfig,
    monitor: &Monitor,
) -> Result<RunResult, SolverError> {
    match config.method {
        Method::Seqn => run_seqn(problem, phi, x0, config, monitor),
        Method::SeqnVr => run_seqn_vr(problem, phi, x0, config, monitor),
        Method::ProxSgd => run_prox_sgd(problem, phi, x0, config, monitor),
        Method::ProxSvrg => run_prox_svrg(problem, phi, x0, config, monitor),
    }
}

pub(super) fn make_generator(config: &SolverConfig, ell_bar: f64) -> Box<dyn DirectionGenerator> {
    match config.direction {
        DirectionKind::Identity => Box::new(IdentityDirection),
        DirectionKind::Lbfgs => Box::new(LbfgsDirection::new(config.memory, config.curvature_delta).with_ell_bar(ell_bar)),
        DirectionKind::CoordLbfgs => Box::new(
            CoordLbfgsDirection::new(config.memory, config.curvature_delta, config.delta1, config.delta2, config.zeta)
                .with_ell_bar(ell_bar),
        ),
    }
}

pub(super) fn tag(e: SolverError, iteration: usize) -> SolverError {
    match e {
        SolverError::NonFinite { what, .. } => SolverError::NonFinite { what, iteration },
        other => other,
    }
}

pub(super) fn check_start(problem: &dyn FiniteSumProblem, x0: &[f64], config: &SolverConfig) -> Result<(), SolverError> {
    config.validate()?;
    if x0.len() != problem.dim() {
        return Err(SolverError::InvalidConfig(format!(
            "start point has dimension {}, problem has {}",
            x0.len(),
            problem.dim()
        )));
    }
    if problem.num_components() == 0 {
        return Err(SolverError::InvalidConfig("problem has no components".into()));
    }
    Ok(())
}

/// Iterates kept for the randomized output rule.
pub(super) struct History {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl History {
    pub fn new() -> Self {
        Self {
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], weight: f64) {
        self.points.push(x.to_vec());
        self.weights.push(weight);
    }
}

pub(super) struct Outcome {
    pub x: Vec<f64>,
    pub status: RunStatus,
    pub iterations: usize,
    pub ifo_per_cycle: Vec<u64>,
    pub step_norms_sq: Vec<f64>,
    pub history: Option<History>,
    pub sample_output: bool,
    pub last_plan: Option<StepPlan>,
    pub certificate: f64,
    pub subspace_phases: usize,
    pub subspace_iterations: usize,
}

pub(super) fn assemble(
    tracker: Tracker,
    out: Outcome,
    keep_history: bool,
    rng: &mut ChaCha8Rng,
) -> Result<RunResult, SolverError> {
    let mut output = None;
    let mut history = None;
    if let Some(h) = out.history {
        if out.sample_output && !h.points.is_empty() {
            let idx = sample_output(&h.weights, rng)?;
            output = Some(h.points[idx].clone());
        }
        if keep_history {
            history = Some(h.points);
        }
    }
    Ok(RunResult {
        x: out.x,
        status: out.status,
        epochs: tracker.epochs(),
        ifo: tracker.ifo,
        trace: tracker.trace,
        iterations: out.iterations,
        ifo_per_cycle: out.ifo_per_cycle,
        step_norms_sq: out.step_norms_sq,
        history,
        output,
        last_plan: out.last_plan,
        certificate: out.certificate,
        subspace_phases: out.subspace_phases,
        subspace_iterations: out.subspace_iterations,
    })
}

fn grown(b0: usize, growth: f64, k: usize, n: usize) -> usize {
    let b = (b0 as f64 * growth.powi(k.min(i32::MAX as usize) as i32)).ceil();
    if b >= n as f64 {
        n
    } else {
        (b as usize).max(1)
    }
}

/// Mini-batch extra-step quasi-Newton iteration.
pub fn run_seqn(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x0: &[f64],
    config: &SolverConfig,
    monitor: &Monitor,
) -> Result<RunResult, SolverError> {
    check_start(problem, x0, config)?;
    if config.policy == PolicyKind::C {
        return Err(SolverError::InvalidConfig("policy C requires seqn-vr".into()));
    }
    let n = problem.num_components();
    let l_f = problem.lipschitz_avg();
    let nu = config.effective_nu_bar();
    let b0 = config.batch.unwrap_or_else(|| default_batch(n)).min(n);
    let bp0 = config.batch_plus.unwrap_or(b0).min(n);
    let adaptive = config.policy == PolicyKind::Adaptive;
    let mut plan = match config.policy {
        PolicyKind::A => policy_a_theory(l_f, config.rho_bar, nu, config.alpha, config.beta).0,
        PolicyKind::B => policy_b_decaying_alpha(l_f, nu, 0),
        _ => adaptive_initial(problem.lipschitz_uniform()),
    };
    let clip = Some(nu);
    let mut gen = make_generator(config, problem.lipschitz_uniform() * plan.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = Tracker::new(problem, phi, monitor, config.tol, config.epochs);
    let sample = config.policy == PolicyKind::B;
    let mut history = (config.record_history || sample).then(History::new);

    let mut x = x0.to_vec();
    let mut step_norms = Vec::new();
    let mut k = 0usize;
    let status = if tracker.record(&x, 0)? {
        RunStatus::Converged
    } else {
        loop {
            if config.max_iterations.is_some_and(|m| k >= m) {
                break if tracker.finish(&x, k)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
            }
            if config.policy == PolicyKind::B {
                plan = policy_b_decaying_alpha(l_f, nu, k);
            }
            let (b, bp) = if config.policy == PolicyKind::A {
                (grown(b0, config.batch_growth, k, n), grown(bp0, config.batch_growth, k, n))
            } else {
                (b0, bp0)
            };
            let oracle = OracleSetup {
                kind: OracleKind::Minibatch,
                snapshot: None,
                batch: b,
                batch_plus: bp,
                reuse_batch: config.reuse_batch,
            };
            let opts = StepOptions {
                clip,
                need_vz: adaptive,
                frozen: None,
            };
            if let Some(h) = history.as_mut() {
                h.push(&x, plan.lambda_plus);
            }
            let prep = prepare_step(&x, problem, phi, &plan, &oracle, &mut rng).map_err(|e| tag(e, k))?;
            let out = complete_step(&x, prep, problem, phi, gen.as_mut(), &plan, &oracle, &opts, &mut rng)
                .map_err(|e| tag(e, k))?;
            step_norms.push(linalg::dist_sq(&out.x_next, &x));
            tracker.charge(out.ifo);
            if adaptive {
                plan = policy_adaptive(&plan, out.u_norm, out.y_norm);
            }
            x = out.x_next;
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
        history,
        sample_output: sample,
        last_plan: Some(plan),
        certificate: gen.certificate_bound(),
        subspace_phases: 0,
        subspace_iterations: 0,
    };
    assemble(tracker, out, config.record_history, &mut rng)
}

enum Mode {
    Normal { cooldown: usize },
    Subspace { frozen: Vec<bool>, entry: f64, iterations: usize },
}

/// Variance-reduced double loop with an optional subspace phase.
pub fn run_seqn_vr(
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    x0: &[f64],
    config: &SolverConfig,
    monitor: &Monitor,
) -> Result<RunResult, SolverError> {
    check_start(problem, x0, config)?;
    let n = problem.num_components();
    let dim = problem.dim();
    let l_f = problem.lipschitz_avg();
    let nu = config.effective_nu_bar();
    let adaptive = config.policy == PolicyKind::Adaptive;

    let mut inner = config.inner_iterations.unwrap_or(10);
    let mut b = config.batch.unwrap_or_else(|| default_batch(n)).min(n);
    let mut bp = config.batch_plus.unwrap_or(b).min(n);
    let mut plan = match config.policy {
        PolicyKind::A => policy_a_theory(l_f, config.rho_bar, nu, config.alpha, config.beta).0,
        PolicyKind::B => policy_b_decaying_alpha(l_f, nu, 0),
        PolicyKind::C => {
            let c = policy_c_params(n, problem.lipschitz_uniform(), nu);
            inner = c.inner_iterations;
            b = c.batch;
            bp = c.batch_plus;
            c.plan
        }
        PolicyKind::Adaptive => adaptive_initial(problem.lipschitz_uniform()),
    };
    let clip = Some(nu);
    let ell_bar = problem.lipschitz_uniform() * plan.lambda;
    let mut gen = make_generator(config, ell_bar);
    let mut sub_gen = LbfgsDirection::new(config.memory, config.curvature_delta).with_ell_bar(ell_bar);
    let subspace_allowed = config.subspace && dim > n;
    let cap = config.subspace_cap_factor.saturating_mul(inner);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = Tracker::new(problem, phi, monitor, config.tol, config.epochs);
    let sample = matches!(config.policy, PolicyKind::B | PolicyKind::C);
    let mut history = (config.record_history || sample).then(History::new);

    let mut x = x0.to_vec();
    let mut step_norms = Vec::new();
    let mut ifo_per_cycle = Vec::new();
    let mut mode = Mode::Normal { cooldown: 0 };
    let (mut phases, mut sub_iters) = (0usize, 0usize);
    let mut j = 0usize;

    let status = if tracker.record(&x, 0)? {
        RunStatus::Converged
    } else {
        'outer: loop {
            if tracker.exhausted() || config.max_iterations.is_some_and(|m| j >= m) {
                break if tracker.finish(&x, j)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
            }
            let snapshot = SvrgSnapshot::new(problem, x.clone())?;
            tracker.charge(n);
            let mut cycle_ifo = n as u64;
            for _ in 0..inner {
                if config.max_iterations.is_some_and(|m| j >= m) {
                    break 'outer if tracker.finish(&x, j)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
                }
                if config.policy == PolicyKind::B {
                    plan = policy_b_decaying_alpha(l_f, nu, j);
                }
                let oracle = OracleSetup {
                    kind: OracleKind::Svrg,
                    snapshot: Some(&snapshot),
                    batch: b,
                    batch_plus: bp,
                    reuse_batch: config.reuse_batch,
                };
                let prep = prepare_step(&x, problem, phi, &plan, &oracle, &mut rng).map_err(|e| tag(e, j))?;

                if subspace_allowed {
                    mode = match mode {
                        Mode::Normal { cooldown } if cooldown > 0 => Mode::Normal { cooldown: cooldown - 1 },
                        Mode::Normal { .. } if linalg::norm_inf(&prep.residual) < config.subspace_eps1 => {
                            let frozen: Vec<bool> = x.iter().map(|v| v.abs() < config.subspace_eps2).collect();
                            let count = frozen.iter().filter(|&&f| f).count();
                            if count == 0 || count == dim {
                                Mode::Normal { cooldown: 0 }
                            } else {
                                phases += 1;
                                sub_gen.reset();
                                log::debug!("subspace phase {phases} at iteration {j}: {count} of {dim} frozen");
                                Mode::Subspace {
                                    frozen,
                                    entry: linalg::norm(&prep.residual) / plan.lambda,
                                    iterations: 0,
                                }
                            }
                        }
                        Mode::Subspace {
                            frozen,
                            entry,
                            iterations,
                        } => {
                            let free_sq: f64 = prep
                                .residual
                                .iter()
                                .zip(&frozen)
                                .filter(|(_, &f)| !f)
                                .map(|(r, _)| r * r)
                                .sum();
                            let reduced = free_sq.sqrt() / plan.lambda;
                            if reduced <= (5e-7f64).min(0.01 * entry) || iterations >= cap {
                                Mode::Normal { cooldown: inner }
                            } else {
                                Mode::Subspace {
                                    frozen,
                                    entry,
                                    iterations,
                                }
                            }
                        }
                        normal => normal,
                    };
                }

                if let Some(h) = history.as_mut() {
                    h.push(&x, plan.lambda_plus);
                }
                let (generator, frozen): (&mut dyn DirectionGenerator, Option<&[bool]>) = match &mode {
                    Mode::Subspace { frozen, .. } => (&mut sub_gen, Some(frozen.as_slice())),
                    Mode::Normal { .. } => (gen.as_mut(), None),
                };
                let opts = StepOptions {
                    clip,
                    need_vz: adaptive,
                    frozen,
                };
                let out = complete_step(&x, prep, problem, phi, generator, &plan, &oracle, &opts, &mut rng)
                    .map_err(|e| tag(e, j))?;
                if let Mode::Subspace { iterations, .. } = &mut mode {
                    *iterations += 1;
                    sub_iters += 1;
                }
                step_norms.push(linalg::dist_sq(&out.x_next, &x));
                tracker.charge(out.ifo);
                cycle_ifo += out.ifo as u64;
                if adaptive {
                    plan = policy_adaptive(&plan, out.u_norm, out.y_norm);
                }
                x = out.x_next;
                j += 1;
                if tracker.boundary_crossed() && tracker.record(&x, j)? {
                    break 'outer RunStatus::Converged;
                }
                if tracker.exhausted() {
                    break 'outer if tracker.finish(&x, j)? { RunStatus::Converged } else { RunStatus::BudgetExhausted };
                }
            }
            ifo_per_cycle.push(cycle_ifo);
        }
    };
    let out = Outcome {
        x,
        status,
        iterations: j,
        ifo_per_cycle,
        step_norms_sq: step_norms,
        history,
        sample_output: sample,
        last_plan: Some(plan),
        certificate: gen.certificate_bound(),
        subspace_phases: phases,
        subspace_iterations: sub_iters,
    };
    assemble(tracker, out, config.record_history, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;
    use crate::prox::{L1Norm, ZeroFunction};

    fn toy() -> QuadraticProblem {
        QuadraticProblem::new(
            vec![vec![1.0, -2.0, 0.0], vec![0.5, 1.0, 2.0], vec![-1.0, 0.0, 1.0], vec![2.0, 2.0, -1.0]],
            vec![1.0, 0.5, 2.0, 1.5],
        )
    }

    #[test]
    fn converged_start_returns_immediately() {
        let p = QuadraticProblem::new(vec![vec![0.0, 0.0]], vec![1.0]);
        let cfg = SolverConfig::default();
        let r = run_seqn_vr(&p, &ZeroFunction, &[0.0, 0.0], &cfg, &Monitor::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.status, RunStatus::Converged);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn batch_growth_schedule() {
        assert_eq!(grown(10, 1.05, 0, 100), 10);
        assert_eq!(grown(10, 1.05, 1, 100), 11);
        assert_eq!(grown(10, 1.05, 1000, 100), 100);
    }

    #[test]
    fn vr_cycle_accounting_without_reuse() {
        let p = toy();
        let cfg = SolverConfig {
            method: Method::SeqnVr,
            direction: DirectionKind::Identity,
            policy: PolicyKind::A,
            inner_iterations: Some(3),
            batch: Some(2),
            batch_plus: Some(1),
            reuse_batch: false,
            epochs: 20.0,
            tol: 1e-300,
            ..SolverConfig::default()
        };
        let r = run_seqn_vr(&p, &L1Norm::new(0.1), &[0.0; 3], &cfg, &Monitor::default()).unwrap();
        assert!(!r.ifo_per_cycle.is_empty());
        assert!(r.ifo_per_cycle.iter().all(|&c| c == 4 + 3 * 3));
        assert_eq!(r.status, RunStatus::BudgetExhausted);
        assert!(r.epochs >= 20.0);
    }

    #[test]
    fn same_seed_same_trace() {
        let p = toy();
        let cfg = SolverConfig {
            batch: Some(2),
            epochs: 15.0,
            tol: 1e-300,
            seed: 11,
            ..SolverConfig::default()
        };
        let a = run_seqn_vr(&p, &L1Norm::new(0.05), &[0.0; 3], &cfg, &Monitor::default()).unwrap();
        let b = run_seqn_vr(&p, &L1Norm::new(0.05), &[0.0; 3], &cfg, &Monitor::default()).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        assert!(a.trace.iter().zip(&b.trace).all(|(s, t)| s.same_bits(t)));
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn trace_rows_follow_epoch_boundaries() {
        let p = toy();
        let cfg = SolverConfig {
            method: Method::Seqn,
            batch: Some(1),
            epochs: 5.0,
            tol: 1e-300,
            ..SolverConfig::default()
        };
        let r = run_seqn(&p, &L1Norm::new(0.05), &[0.0; 3], &cfg, &Monitor::default()).unwrap();
        let epochs: Vec<f64> = r.trace.iter().map(|t| t.epoch).collect();
        assert_eq!(epochs[0], 0.0);
        assert!(epochs.windows(2).all(|w| w[0] < w[1]));
        assert!(epochs.len() >= 5);
    }
}
