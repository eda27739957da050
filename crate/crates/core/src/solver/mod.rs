//! The extra-step iteration, its variance-reduced double loop, baselines,
//! step-size policies and the deterministic reference solver.

mod baselines;
mod checks;
mod output;
mod policy;
mod reference;
mod seqn;
mod step;

pub use baselines::{run_prox_sgd, run_prox_svrg};
pub use checks::{check_descent_inequality, check_pointdiff_inequality, InequalityCheck};
pub use output::{rel_err, rel_err_clamped, sample_output};
pub use policy::{
    adaptive_initial, ceil_cbrt, policy_a_theory, policy_adaptive, policy_b_decaying_alpha, policy_c_params, PolicyCParams,
    StepPlan, ADAPTIVE_EMA_WEIGHT, ADAPTIVE_MAX, ADAPTIVE_MIN, GOLDEN_GAMMA,
};
pub use reference::{exact_residual_norm, run_reference, ReferenceOptions, ReferenceResult};
pub use seqn::{run, run_seqn, run_seqn_vr};
pub use step::{complete_step, prepare_step, seqn_step, OracleSetup, PreparedStep, StepOptions, StepOutcome};

use crate::directions::DirectionError;
use crate::oracles::{full_gradient, FiniteSumProblem, OracleError};
use crate::prox::{ProxError, ProxFunction};
use crate::trace::{Clock, TraceRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty iterate history")]
    EmptyHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Seqn,
    SeqnVr,
    ProxSgd,
    ProxSvrg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionKind {
    Identity,
    Lbfgs,
    CoordLbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Constant steps from the descent-lemma bounds.
    A,
    /// `λ₊ ∝ 1/√(k+1)` with small extrapolation weights.
    B,
    /// Constant steps and batch sizes from the IFO complexity result.
    C,
    /// Local Lipschitz estimates from curvature pairs.
    #[serde(rename = "adaptive")]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SgdStep {
    Constant(f64),
    /// `λ_k = c / √(k+1)`
    Decaying(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub direction: DirectionKind,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Budget in epochs (component-gradient evaluations / N).
    pub epochs: f64,
    pub tol: f64,
    pub max_iterations: Option<usize>,
    /// Inner iterations per snapshot.
    pub inner_iterations: Option<usize>,
    pub batch: Option<usize>,
    pub batch_plus: Option<usize>,
    pub reuse_batch: bool,
    pub subspace: bool,
    pub mu: f64,
    /// Every direction is clipped to `‖d‖ ≤ ν̄‖F‖`; the theory policies also use it.
    pub nu_bar: f64,
    pub rho_bar: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Per-iteration batch growth of plain mini-batch runs under policy A.
    pub batch_growth: f64,
    /// `None` means `1 / L_f`-scaled decay.
    pub sgd_step: Option<SgdStep>,
    pub memory: usize,
    pub curvature_delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub zeta: f64,
    pub subspace_eps1: f64,
    pub subspace_eps2: f64,
    pub subspace_cap_factor: usize,
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::SeqnVr,
            direction: DirectionKind::CoordLbfgs,
            policy: PolicyKind::Adaptive,
            seed: 0,
            epochs: 100.0,
            tol: 1e-6,
            max_iterations: None,
            inner_iterations: None,
            batch: None,
            batch_plus: None,
            reuse_batch: true,
            subspace: false,
            mu: 0.0,
            nu_bar: 10.0,
            rho_bar: 0.5,
            alpha: 1.0,
            beta: 1.0,
            batch_growth: 1.05,
            sgd_step: None,
            memory: crate::directions::DEFAULT_MEMORY,
            curvature_delta: crate::directions::DEFAULT_CURVATURE_DELTA,
            delta1: crate::directions::DEFAULT_DELTA1,
            delta2: crate::directions::DEFAULT_DELTA2,
            zeta: 1.0,
            subspace_eps1: 1e-3,
            subspace_eps2: 1e-10,
            subspace_cap_factor: 20,
            record_history: false,
        }
    }
}

/// `min{300, ⌊0.01N⌋}`, at least 1.
pub fn default_batch(n: usize) -> usize {
    (n / 100).clamp(1, 300)
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.epochs > 0.0) {
            return bad("epoch budget must be positive");
        }
        if self.max_iterations == Some(0) || self.inner_iterations == Some(0) {
            return bad("iteration counts must be positive");
        }
        if self.batch == Some(0) || self.batch_plus == Some(0) {
            return bad("batch sizes must be positive");
        }
        if !(self.mu >= 0.0) {
            return bad("mu must be nonnegative");
        }
        if !(self.rho_bar > 0.0 && self.rho_bar < 1.0) {
            return bad("rho_bar must lie in (0, 1)");
        }
        if !(self.nu_bar >= 1.0) {
            return bad("nu_bar must be at least 1");
        }
        if self.method == Method::ProxSgd && self.policy == PolicyKind::C {
            return bad("policy C requires a variance-reduced method");
        }
        Ok(())
    }

    /// `ν̄` actually used by the theory policies for this direction kind.
    pub fn effective_nu_bar(&self) -> f64 {
        match self.direction {
            DirectionKind::Identity => 1.0,
            _ => self.nu_bar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub x: Vec<f64>,
    pub status: RunStatus,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub ifo: u64,
    pub epochs: f64,
    /// Component-gradient evaluations of each completed snapshot cycle.
    pub ifo_per_cycle: Vec<u64>,
    /// `‖x^{k+1} − x^k‖²` per step.
    pub step_norms_sq: Vec<f64>,
    /// Iterates at which steps were taken, when recorded.
    pub history: Option<Vec<Vec<f64>>>,
    /// Randomly sampled output iterate (policies B and C).
    pub output: Option<Vec<f64>>,
    pub last_plan: Option<StepPlan>,
    pub certificate: f64,
    pub subspace_phases: usize,
    pub subspace_iterations: usize,
}

/// Train and test accuracy of an iterate.
pub type AccuracyFn<'a> = dyn Fn(&[f64]) -> (f64, f64) + Sync + 'a;

/// What to measure at trace points.
pub struct Monitor<'a> {
    pub psi_star: Option<f64>,
    pub accuracy: Option<&'a AccuracyFn<'a>>,
    pub clock: Clock,
}

impl Default for Monitor<'_> {
    fn default() -> Self {
        Self {
            psi_star: None,
            accuracy: None,
            clock: Clock::Frozen,
        }
    }
}

impl<'a> Monitor<'a> {
    pub fn with_psi_star(psi_star: f64) -> Self {
        Self {
            psi_star: Some(psi_star),
            ..Self::default()
        }
    }
}

/// IFO accounting, epoch-boundary detection and trace rows.
pub(crate) struct Tracker<'a> {
    problem: &'a dyn FiniteSumProblem,
    phi: &'a dyn ProxFunction,
    monitor: &'a Monitor<'a>,
    n: u64,
    pub ifo: u64,
    next_epoch: u64,
    last_record_ifo: Option<u64>,
    pub trace: Vec<TraceRecord>,
    tol: f64,
    budget: f64,
}

impl<'a> Tracker<'a> {
    pub fn new(
        problem: &'a dyn FiniteSumProblem,
        phi: &'a dyn ProxFunction,
        monitor: &'a Monitor<'a>,
        tol: f64,
        budget: f64,
    ) -> Self {
        Self {
            problem,
            phi,
            monitor,
            n: problem.num_components() as u64,
            ifo: 0,
            next_epoch: 1,
            last_record_ifo: None,
            trace: Vec::new(),
            tol,
            budget,
        }
    }

    pub fn charge(&mut self, evaluations: usize) {
        self.ifo += evaluations as u64;
    }

    pub fn epochs(&self) -> f64 {
        self.ifo as f64 / self.n as f64
    }

    pub fn exhausted(&self) -> bool {
        self.epochs() >= self.budget
    }

    /// True once per crossing of one or more integer epoch marks.
    pub fn boundary_crossed(&mut self) -> bool {
        if self.ifo >= self.next_epoch * self.n {
            self.next_epoch = self.ifo / self.n + 1;
            true
        } else {
            false
        }
    }

    /// Appends a row for `x`; returns whether the stopping test passes.
    pub fn record(&mut self, x: &[f64], iteration: usize) -> Result<bool, SolverError> {
        let psi = self.problem.value(x) + self.phi.value(x);
        if !psi.is_finite() {
            return Err(SolverError::NonFinite {
                what: "objective",
                iteration,
            });
        }
        let g = full_gradient(self.problem, x)?;
        let residual_norm = exact_residual_norm(x, &g, self.phi)?;
        let rel = self.monitor.psi_star.map_or(f64::NAN, |s| rel_err(psi, s));
        let (train_acc, test_acc) = self.monitor.accuracy.map_or((f64::NAN, f64::NAN), |f| f(x));
        self.trace.push(TraceRecord {
            epoch: self.epochs(),
            wall_seconds: self.monitor.clock.elapsed(),
            psi,
            rel_err: rel,
            nnz: crate::data::nnz(x),
            train_acc,
            test_acc,
            residual_norm,
        });
        self.last_record_ifo = Some(self.ifo);
        Ok(match self.monitor.psi_star {
            Some(_) => rel <= self.tol,
            None => residual_norm <= self.tol,
        })
    }

    /// Records a closing row unless the last row already describes `x`.
    pub fn finish(&mut self, x: &[f64], iteration: usize) -> Result<bool, SolverError> {
        if self.last_record_ifo == Some(self.ifo) {
            let last = self.trace.last().expect("a row was recorded");
            return Ok(match self.monitor.psi_star {
                Some(_) => last.rel_err <= self.tol,
                None => last.residual_norm <= self.tol,
            });
        }
        self.record(x, iteration)
    }
}
