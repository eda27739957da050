//! Stochastic extra-step quasi-Newton methods for composite problems
//! `min f(x) + φ(x)` with `f` a finite sum of smooth terms and `φ` convex
//! with a cheap proximal operator.

// `!(a > b)` is used deliberately so that NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod directions;
pub mod linalg;
pub mod oracles;
pub mod problems;
pub mod prox;
pub mod solver;
pub mod trace;
pub mod verify;

pub use data::{Dataset, LogRegProblem, SparseRow};
pub use directions::{CoordLbfgsDirection, DirectionGenerator, IdentityDirection, LbfgsDirection};
pub use oracles::{FiniteSumProblem, SampleSet, SvrgSnapshot};
pub use prox::{L1Norm, ProxFunction, ScaledMetric, ZeroFunction};
pub use solver::{
    run, DirectionKind, Method, Monitor, PolicyKind, RunResult, RunStatus, SolverConfig, SolverError, StepPlan,
};
pub use trace::{Clock, RunManifest, TraceRecord};
