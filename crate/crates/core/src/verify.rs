//! Randomized property suites behind `seqn verify`.
//!
//! Each suite draws its instances from a seeded generator, checks one family
//! of invariants against an independent dense or brute-force computation, and
//! keeps the first failing instance as JSON so it can be replayed.

use crate::data::{Dataset, LogRegProblem, SparseRow};
use crate::directions::{
    coord_lbfgs_apply, coordinate_partition, lbfgs_apply, nu_bar_bound, CurvatureBuffer, DEFAULT_DELTA1,
};
use crate::linalg::{self, dot, norm, norm_sq, sub};
use crate::oracles::{full_gradient, minibatch_gradient, svrg_gradient, FiniteSumProblem, SampleSet, SvrgSnapshot};
use crate::problems::QuadraticProblem;
use crate::prox::{moreau_envelope, L1Norm, ScaledMetric};
use crate::solver::{check_descent_inequality, check_pointdiff_inequality, StepPlan};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub const SUITES: &[&str] = &["prox", "oracles", "lbfgs", "certificate", "descent", "pointdiff"];

/// Soft-thresholding with threshold `τ`; swappable to smoke-test the suites.
pub type ThresholdFn = fn(&[f64], f64) -> Vec<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("unknown suite {0:?}; known suites: prox, oracles, lbfgs, certificate, descent, pointdiff")]
    UnknownSuite(String),
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub threshold: ThresholdFn,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: crate::prox::soft_threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub property: String,
    pub cases: usize,
    pub failures: usize,
    /// First failing instance.
    pub counterexample: Option<Value>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    suite: &'static str,
    property: &'static str,
    cases: usize,
    failures: usize,
    counterexample: Option<Value>,
}

impl Tally {
    fn new(suite: &'static str, property: &'static str) -> Self {
        Self {
            suite,
            property,
            cases: 0,
            failures: 0,
            counterexample: None,
        }
    }

    fn check(&mut self, ok: bool, instance: impl FnOnce() -> Value) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(instance());
            }
        }
    }

    fn report(self) -> SuiteReport {
        SuiteReport {
            suite: self.suite.to_string(),
            property: self.property.to_string(),
            cases: self.cases,
            failures: self.failures,
            counterexample: self.counterexample,
        }
    }
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<SuiteReport>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    Ok(match name {
        "prox" => prox_suite(&mut rng, opts.threshold),
        "oracles" => oracle_suite(&mut rng),
        "lbfgs" => lbfgs_suite(&mut rng),
        "certificate" => certificate_suite(&mut rng),
        "descent" => descent_suite(&mut rng),
        "pointdiff" => pointdiff_suite(&mut rng),
        other => return Err(VerifyError::UnknownSuite(other.to_string())),
    })
}

pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteReport> {
    SUITES
        .iter()
        .flat_map(|s| run_suite(s, opts).expect("registered suite"))
        .collect()
}

fn rvec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Sign-flipped soft-thresholding, for mutation smoke tests.
pub fn soft_threshold_sign_bug(x: &[f64], tau: f64) -> Vec<f64> {
    x.iter().map(|&v| -v.signum() * (v.abs() - tau).max(0.0)).collect()
}

fn prox_suite(rng: &mut ChaCha8Rng, threshold: ThresholdFn) -> Vec<SuiteReport> {
    let mut firm = Tally::new("prox", "firm nonexpansiveness");
    let mut optimal = Tally::new("prox", "prox optimality");
    let mut envelope = Tally::new("prox", "envelope gradient");
    let mut scaling = Tally::new("prox", "residual scaling monotonicity");
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let lambda = rng.random_range(0.05..3.0);
        let mu = rng.random_range(0.0..2.0);
        let tau = lambda * mu;
        let x = rvec(rng, n, 3.0);
        let y = rvec(rng, n, 3.0);

        let px = threshold(&x, tau);
        let py = threshold(&y, tau);
        let dp = sub(&px, &py);
        let lhs = norm_sq(&dp);
        let rhs = dot(&dp, &sub(&x, &y));
        firm.check(lhs <= rhs + 1e-12, || json!({"x": x, "y": y, "lambda": lambda, "mu": mu, "lhs": lhs, "rhs": rhs}));

        let obj = |p: &[f64]| mu * p.iter().map(|v| v.abs()).sum::<f64>() + linalg::dist_sq(&x, p) / (2.0 * lambda);
        let at_p = obj(&px);
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let mut c = px.clone();
            let scale = 10f64.powf(rng.random_range(-4.0..0.5));
            linalg::axpy(1.0, &rvec(rng, n, scale), &mut c);
            worst = worst.min(obj(&c) - at_p);
        }
        optimal.check(worst >= -1e-12, || json!({"x": x, "lambda": lambda, "mu": mu, "min_gap": worst}));

        // Central differences of the Huber form, skipping points near kinks.
        let phi = L1Norm::new(mu);
        let metric = ScaledMetric::new(lambda).expect("positive");
        let h = 1e-6;
        if x.iter().all(|v| (v.abs() - tau).abs() > 1e-3) {
            let grad: Vec<f64> = x.iter().zip(&px).map(|(a, b)| (a - b) / lambda).collect();
            let fd: Vec<f64> = (0..n)
                .map(|j| {
                    let mut a = x.clone();
                    let mut b = x.clone();
                    a[j] += h;
                    b[j] -= h;
                    (moreau_envelope(&a, metric, &phi) - moreau_envelope(&b, metric, &phi)) / (2.0 * h)
                })
                .collect();
            let err = norm(&sub(&grad, &fd)) / norm(&fd).max(1e-8);
            envelope.check(err <= 1e-6, || json!({"x": x, "lambda": lambda, "mu": mu, "rel_err": err}));
        }

        let v = rvec(rng, n, 2.0);
        let mut deltas: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..4.0)).collect();
        deltas.sort_by(f64::total_cmp);
        let scaled: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                let p = threshold(&linalg::add_scaled(&x, -d, &v), d * mu);
                norm(&sub(&x, &p)) / d
            })
            .collect();
        let ok = scaled.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        scaling.check(ok, || json!({"x": x, "v": v, "mu": mu, "deltas": deltas, "values": scaled}));
    }
    vec![firm.report(), optimal.report(), envelope.report(), scaling.report()]
}

/// Random ℓ1-logistic problem with dense rows.
pub fn random_logreg<R: Rng>(rng: &mut R, samples: usize, features: usize, scale: f64) -> LogRegProblem {
    let rows = (0..samples)
        .map(|_| SparseRow {
            label: if rng.random::<bool>() { 1.0 } else { -1.0 },
            indices: (0..features).collect(),
            values: rvec(rng, features, scale),
        })
        .collect();
    let data = Dataset::from_rows("random", rows, Some(features)).expect("indices in range");
    LogRegProblem::new(data, 0.0)
}

pub fn random_quadratic<R: Rng>(rng: &mut R, samples: usize, features: usize) -> QuadraticProblem {
    let centers = (0..samples).map(|_| rvec(rng, features, 2.0)).collect();
    let weights = (0..samples).map(|_| rng.random_range(0.1..3.0)).collect();
    QuadraticProblem::new(centers, weights)
}

fn subsets(n: usize, b: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == b {
            out.push((0..n).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn oracle_suite(rng: &mut ChaCha8Rng) -> Vec<SuiteReport> {
    let mut unbiased = Tally::new("oracles", "minibatch unbiasedness");
    let mut svrg_unbiased = Tally::new("oracles", "svrg unbiasedness");
    let mut variance = Tally::new("oracles", "svrg variance bound");
    for big_n in 1..=6usize {
        for rep in 0..4 {
            let dim = rng.random_range(1..=4);
            let problem: Box<dyn FiniteSumProblem> = if rep % 2 == 0 {
                Box::new(random_logreg(rng, big_n, dim, 2.0))
            } else {
                Box::new(random_quadratic(rng, big_n, dim))
            };
            let x = rvec(rng, dim, 2.0);
            let anchor = rvec(rng, dim, 2.0);
            let g = full_gradient(problem.as_ref(), &x).expect("finite");
            let snap = SvrgSnapshot::new(problem.as_ref(), anchor.clone()).expect("finite");
            let l = problem.lipschitz_uniform();
            for b in 1..=big_n {
                let sets = subsets(big_n, b);
                let count = sets.len() as f64;
                let mut mean = vec![0.0; dim];
                let mut mean_vr = vec![0.0; dim];
                let mut var = 0.0;
                for s in &sets {
                    let s = SampleSet::new(s.clone(), big_n).expect("valid subset");
                    let v = minibatch_gradient(problem.as_ref(), &x, &s).expect("finite");
                    let w = svrg_gradient(problem.as_ref(), &x, &s, &snap).expect("finite");
                    linalg::axpy(1.0 / count, &v, &mut mean);
                    linalg::axpy(1.0 / count, &w, &mut mean_vr);
                    var += linalg::dist_sq(&g, &w) / count;
                }
                let err = linalg::norm_inf(&sub(&mean, &g));
                unbiased.check(err <= 1e-14, || json!({"N": big_n, "b": b, "x": x, "max_abs_err": err}));
                let err = linalg::norm_inf(&sub(&mean_vr, &g));
                svrg_unbiased.check(err <= 1e-14, || json!({"N": big_n, "b": b, "x": x, "max_abs_err": err}));
                let bound = l * l / b as f64 * linalg::dist_sq(&x, &anchor);
                variance.check(var <= bound * (1.0 + 1e-12) + 1e-14, || {
                    json!({"N": big_n, "b": b, "x": x, "anchor": anchor, "variance": var, "bound": bound})
                });
            }
        }
    }
    vec![unbiased.report(), svrg_unbiased.report(), variance.report()]
}

/// Dense `W` from the BFGS recursion `W ← (I − ρuyᵀ)W(I − ρyuᵀ) + ρuuᵀ`,
/// oldest pair first, starting from `γI`.
pub fn dense_bfgs(us: &[Vec<f64>], ys: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = us.first().map_or(0, |u| u.len());
    let eye = DMatrix::<f64>::identity(n, n);
    let mut w = &eye * gamma;
    for (u, y) in us.iter().zip(ys) {
        let u = DVector::from_column_slice(u);
        let y = DVector::from_column_slice(y);
        let rho = 1.0 / u.dot(&y);
        let left = &eye - (&u * y.transpose()) * rho;
        let right = &eye - (&y * u.transpose()) * rho;
        w = &left * &w * &right + (&u * u.transpose()) * rho;
    }
    w
}

/// Random buffer of accepted pairs in dimension `n`; `y ≈ Hu` for a random
/// symmetric `H`, optionally with indefinite noise.
fn random_buffer(rng: &mut ChaCha8Rng, n: usize, p: usize) -> CurvatureBuffer {
    let mut buf = CurvatureBuffer::new(p, 1e-4);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.01..1.0);
    let mut tries = 0;
    while buf.len() < p && tries < 50 * p {
        tries += 1;
        let u = rvec(rng, n, 1.0);
        let hu = &h * DVector::from_column_slice(&u);
        let noise = rng.random_range(0.0..0.5);
        let y: Vec<f64> = hu.iter().map(|v| v + noise * rng.random_range(-1.0..1.0)).collect();
        buf.try_push(&u, &y);
    }
    buf
}

fn lbfgs_suite(rng: &mut ChaCha8Rng) -> Vec<SuiteReport> {
    let mut full = Tally::new("lbfgs", "two-loop equals dense recursion");
    let mut coord = Tally::new("lbfgs", "coordinate variant equals dense block form");
    let mut pd = Tally::new("lbfgs", "positive definiteness");
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let p = rng.random_range(1..=4);
        let buf = random_buffer(rng, n, p);
        if buf.is_empty() {
            continue;
        }
        let us: Vec<Vec<f64>> = buf.pairs().map(|q| q.u.clone()).collect();
        let ys: Vec<Vec<f64>> = buf.pairs().map(|q| q.y.clone()).collect();
        let last = us.len() - 1;
        let gamma = dot(&us[last], &ys[last]) / dot(&ys[last], &ys[last]);
        let w = dense_bfgs(&us, &ys, gamma);
        let r = rvec(rng, n, 1.0);
        let fast = lbfgs_apply(&buf, &r);
        let slow: Vec<f64> = (&w * DVector::from_column_slice(&r)).iter().copied().collect();
        let err = linalg::norm_inf(&sub(&fast, &slow)) / linalg::norm_inf(&slow).max(1.0);
        full.check(err <= 1e-11, || json!({"u": us, "y": ys, "r": r, "rel_err": err}));
        pd.check(dot(&r, &fast) > 0.0, || json!({"u": us, "y": ys, "r": r}));

        // Residual with some entries below δ₂ so that both blocks are populated.
        let mut res = rvec(rng, n, 1.0);
        for v in res.iter_mut() {
            if rng.random_bool(0.3) {
                *v *= 1e-8;
            }
        }
        let part = coordinate_partition(&res, 1e-6);
        let fast = coord_lbfgs_apply(&buf, &part, &res, DEFAULT_DELTA1);
        let slow = dense_coordinate(&us, &ys, &part.active, &res, DEFAULT_DELTA1, part.zeta)
            .unwrap_or_else(|| (&w * DVector::from_column_slice(&res)).iter().copied().collect());
        let err = linalg::norm_inf(&sub(&fast, &slow)) / linalg::norm_inf(&slow).max(1.0);
        coord.check(err <= 1e-11, || json!({"u": us, "y": ys, "residual": res, "rel_err": err}));
    }
    vec![full.report(), coord.report(), pd.report()]
}

/// Dense block matrix `diag(W_II, ζI)` applied to `r`, or `None` when the
/// construction falls back to the full recursion.
fn dense_coordinate(
    us: &[Vec<f64>],
    ys: &[Vec<f64>],
    active: &[usize],
    r: &[f64],
    delta1: f64,
    zeta: f64,
) -> Option<Vec<f64>> {
    dense_coordinate_matrix(us, ys, active, delta1, zeta).map(|m| (&m * DVector::from_column_slice(r)).iter().copied().collect())
}

pub fn dense_coordinate_matrix(
    us: &[Vec<f64>],
    ys: &[Vec<f64>],
    active: &[usize],
    delta1: f64,
    zeta: f64,
) -> Option<DMatrix<f64>> {
    if active.is_empty() {
        return None;
    }
    let n = us[0].len();
    let pick = |v: &Vec<f64>| active.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let (mut qu, mut qy) = (Vec::new(), Vec::new());
    for (u, y) in us.iter().zip(ys) {
        let (ui, yi) = (pick(u), pick(y));
        if dot(&ui, &yi).abs() >= delta1 * norm_sq(u) && dot(&ui, &yi).abs() >= 1e-300 && norm_sq(&yi) >= 1e-300 {
            qu.push(ui);
            qy.push(yi);
        }
    }
    if qu.is_empty() {
        return None;
    }
    let last = qu.len() - 1;
    let gamma = dot(&qu[last], &qy[last]) / dot(&qy[last], &qy[last]);
    let block = dense_bfgs(&qu, &qy, gamma);
    let mut m = DMatrix::<f64>::identity(n, n) * zeta;
    for (a, &i) in active.iter().enumerate() {
        m[(i, i)] = 0.0;
        for (b, &j) in active.iter().enumerate() {
            m[(i, j)] = block[(a, b)];
        }
    }
    Some(m)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().fold(0.0, |a, &b| a.max(b))
}

fn certificate_suite(rng: &mut ChaCha8Rng) -> Vec<SuiteReport> {
    let mut full = Tally::new("certificate", "L-BFGS norm certificate");
    let mut coord = Tally::new("certificate", "coordinate L-BFGS norm certificate");
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let p = rng.random_range(1..=4);
        let buf = random_buffer(rng, n, p);
        if buf.is_empty() {
            continue;
        }
        let us: Vec<Vec<f64>> = buf.pairs().map(|q| q.u.clone()).collect();
        let ys: Vec<Vec<f64>> = buf.pairs().map(|q| q.y.clone()).collect();
        let ell = us
            .iter()
            .zip(&ys)
            .map(|(u, y)| norm(y) / norm(u) - 2.0)
            .fold(0.0, f64::max);
        let bound = nu_bar_bound(p, 1e-4, ell, 1.0);
        let last = us.len() - 1;
        let w = dense_bfgs(&us, &ys, dot(&us[last], &ys[last]) / dot(&ys[last], &ys[last]));
        let measured = spectral_norm(&w);
        full.check(measured <= bound, || json!({"u": us, "y": ys, "norm": measured, "bound": bound}));

        let active: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
        if let Some(m) = dense_coordinate_matrix(&us, &ys, &active, DEFAULT_DELTA1, 1.0) {
            let measured = spectral_norm(&m);
            let bound = nu_bar_bound(p, DEFAULT_DELTA1, ell, 1.0);
            coord.check(measured <= bound, || {
                json!({"u": us, "y": ys, "active": active, "norm": measured, "bound": bound})
            });
        }
    }
    vec![full.report(), coord.report()]
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Box<dyn FiniteSumProblem>, L1Norm, usize) {
    let samples = rng.random_range(1..=6);
    let n = rng.random_range(1..=5);
    let problem: Box<dyn FiniteSumProblem> = if rng.random_bool(0.5) {
        Box::new(random_logreg(rng, samples, n, 2.0))
    } else {
        Box::new(random_quadratic(rng, samples, n))
    };
    (problem, L1Norm::new(rng.random_range(0.0..1.0)), n)
}

fn descent_suite(rng: &mut ChaCha8Rng) -> Vec<SuiteReport> {
    let mut exact = Tally::new("descent", "one-step bound with exact oracles");
    let mut biased = Tally::new("descent", "one-step bound with arbitrary oracles");
    for case in 0..2000 {
        let (problem, phi, n) = random_instance(rng);
        let l_f = problem.lipschitz_avg();
        let x = rvec(rng, n, 2.0);
        let plan = StepPlan {
            lambda: rng.random_range(0.05..2.0) / l_f,
            lambda_plus: rng.random_range(0.05..2.0) / l_f,
            alpha: rng.random_range(0.0..2.0),
            beta: rng.random_range(0.0..2.0),
        };
        let rho = if rng.random_bool(0.5) { None } else { Some(rng.random_range(0.1..10.0)) };
        let (d, v, v_plus, tally) = if case % 2 == 0 {
            let g = full_gradient(problem.as_ref(), &x).expect("finite");
            let p = phi.prox(ScaledMetric::new(plan.lambda).expect("positive"), &linalg::add_scaled(&x, -plan.lambda, &g));
            let d = sub(&p, &x);
            let z = linalg::add_scaled(&x, plan.beta, &d);
            let gz = full_gradient(problem.as_ref(), &z).expect("finite");
            (d, g, gz, &mut exact)
        } else {
            (rvec(rng, n, 1.5), rvec(rng, n, 3.0), rvec(rng, n, 3.0), &mut biased)
        };
        use crate::prox::ProxFunction;
        let c = check_descent_inequality(problem.as_ref(), &phi, &x, &d, &v, &v_plus, &plan, rho).expect("finite");
        tally.check(c.holds, || {
            json!({"x": x, "d": d, "v": v, "v_plus": v_plus, "plan": plan, "rho": rho, "mu": phi.mu, "lhs": c.lhs, "rhs": c.rhs})
        });
    }
    vec![exact.report(), biased.report()]
}

fn pointdiff_suite(rng: &mut ChaCha8Rng) -> Vec<SuiteReport> {
    let mut tally = Tally::new("pointdiff", "proximal-point distance bound");
    for _ in 0..200 {
        let (problem, phi, n) = random_instance(rng);
        let l_f = problem.lipschitz_avg();
        let x = rvec(rng, n, 2.0);
        let plan = StepPlan {
            lambda: 1.0 / (6.0 * l_f),
            lambda_plus: rng.random_range(0.1..1.0) / (6.0 * l_f),
            alpha: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..1.0),
        };
        let d = rvec(rng, n, 1.0);
        let v_plus = rvec(rng, n, 2.0);
        let theta = 1.0 / (3.0 * l_f);
        match check_pointdiff_inequality(problem.as_ref(), &phi, &x, &d, &v_plus, &plan, theta) {
            Ok(c) => tally.check(c.holds, || {
                json!({"x": x, "d": d, "v_plus": v_plus, "plan": plan, "theta": theta, "mu": phi.mu, "lhs": c.lhs, "rhs": c.rhs})
            }),
            Err(e) => tally.check(false, || json!({"x": x, "error": e.to_string()})),
        }
    }
    vec![tally.report()]
}
