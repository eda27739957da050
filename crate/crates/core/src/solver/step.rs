use super::{SolverError, StepPlan};
use crate::directions::{direction, DirectionGenerator};
use crate::linalg;
use crate::oracles::{oracle_at, sample_without_replacement, FiniteSumProblem, OracleKind, SampleSet, SvrgSnapshot};
use crate::prox::{residual, ProxFunction, ScaledMetric};
use rand::Rng;

/// Which stochastic oracle to call and with what batch sizes.
#[derive(Debug, Clone, Copy)]
pub struct OracleSetup<'a> {
    pub kind: OracleKind,
    pub snapshot: Option<&'a SvrgSnapshot>,
    pub batch: usize,
    pub batch_plus: usize,
    /// Evaluate `v₊` on the same sample as `v`.
    pub reuse_batch: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions<'a> {
    /// Scale `d` down so that `‖d‖ ≤ clip · ‖F‖`.
    pub clip: Option<f64>,
    /// Compute `v_z` (and `F_z`) even when the generator does not ask for pairs.
    pub need_vz: bool,
    /// Coordinates held fixed; their residual, direction and `v₊` are zeroed.
    pub frozen: Option<&'a [bool]>,
}

/// First half of an iteration: the sample, `v = ∇̃f_S(x)` and `F^Λ_v(x)`.
#[derive(Debug, Clone)]
pub struct PreparedStep {
    pub sample: SampleSet,
    pub v: Vec<f64>,
    pub residual: Vec<f64>,
    pub ifo: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    pub z: Vec<f64>,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub v_plus: Vec<f64>,
    /// `F^Λ_v(x)`, masked when coordinates are frozen.
    pub residual: Vec<f64>,
    /// `F^Λ_{v_z}(z)` when it was computed.
    pub residual_z: Option<Vec<f64>>,
    pub sample: SampleSet,
    pub sample_plus: SampleSet,
    pub u_norm: f64,
    pub y_norm: f64,
    pub pair_accepted: bool,
    /// Component-gradient evaluations spent in this iteration.
    pub ifo: usize,
}

fn mask(v: &mut [f64], frozen: Option<&[bool]>) {
    if let Some(fz) = frozen {
        for (vi, &f) in v.iter_mut().zip(fz) {
            if f {
                *vi = 0.0;
            }
        }
    }
}

pub fn prepare_step<R: Rng + ?Sized>(
    x: &[f64],
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    plan: &StepPlan,
    oracle: &OracleSetup,
    rng: &mut R,
) -> Result<PreparedStep, SolverError> {
    plan.validate()?;
    let sample = sample_without_replacement(rng, problem.num_components(), oracle.batch)?;
    let v = oracle_at(oracle.kind, problem, x, &sample, oracle.snapshot)?;
    let f = residual(x, &v, ScaledMetric::new(plan.lambda)?, phi)?;
    Ok(PreparedStep {
        ifo: sample.len(),
        sample,
        v,
        residual: f,
    })
}

/// Second half: direction, extrapolation point, `v₊`, the prox step and the
/// curvature pair.
#[allow(clippy::too_many_arguments)]
pub fn complete_step<R: Rng + ?Sized>(
    x: &[f64],
    prepared: PreparedStep,
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    generator: &mut dyn DirectionGenerator,
    plan: &StepPlan,
    oracle: &OracleSetup,
    opts: &StepOptions,
    rng: &mut R,
) -> Result<StepOutcome, SolverError> {
    let metric = ScaledMetric::new(plan.lambda)?;
    let metric_plus = ScaledMetric::new(plan.lambda_plus)?;
    let PreparedStep {
        sample,
        v,
        residual: mut f_x,
        mut ifo,
    } = prepared;
    mask(&mut f_x, opts.frozen);

    let mut d = direction(generator, &f_x)?;
    if let Some(nu) = opts.clip {
        let dn = linalg::norm(&d);
        let bound = nu * linalg::norm(&f_x);
        if dn > bound && dn > 0.0 {
            linalg::scale(bound / dn, &mut d);
        }
    }
    mask(&mut d, opts.frozen);

    let z = linalg::add_scaled(x, plan.beta, &d);
    let same_point = z == x;
    let want_vz = generator.wants_pairs() || opts.need_vz;
    let n = problem.num_components();

    let (mut v_plus, v_z, sample_plus) = if oracle.reuse_batch {
        let vz = if same_point {
            v.clone()
        } else {
            ifo += sample.len();
            oracle_at(oracle.kind, problem, &z, &sample, oracle.snapshot)?
        };
        (vz.clone(), Some(vz), sample.clone())
    } else {
        let s_plus = sample_without_replacement(rng, n, oracle.batch_plus)?;
        ifo += s_plus.len();
        let vp = oracle_at(oracle.kind, problem, &z, &s_plus, oracle.snapshot)?;
        let vz = if !want_vz {
            None
        } else if s_plus == sample {
            Some(vp.clone())
        } else if same_point {
            Some(v.clone())
        } else {
            ifo += sample.len();
            Some(oracle_at(oracle.kind, problem, &z, &sample, oracle.snapshot)?)
        };
        (vp, vz, s_plus)
    };
    mask(&mut v_plus, opts.frozen);

    let mut arg = linalg::add_scaled(x, plan.alpha, &d);
    linalg::axpy(-plan.lambda_plus, &v_plus, &mut arg);
    let mut x_next = phi.prox(metric_plus, &arg);
    if let Some(fz) = opts.frozen {
        for i in 0..x.len() {
            if fz[i] {
                x_next[i] = x[i];
            }
        }
    }
    if !linalg::all_finite(&x_next) {
        return Err(SolverError::NonFinite {
            what: "iterate",
            iteration: 0,
        });
    }

    let mut residual_z = None;
    let (mut u_norm, mut y_norm, mut pair_accepted) = (0.0, 0.0, false);
    if let Some(vz) = v_z.filter(|_| want_vz) {
        let mut f_z = residual(&z, &vz, metric, phi)?;
        mask(&mut f_z, opts.frozen);
        let u = linalg::sub(&z, x);
        let y = linalg::sub(&f_z, &f_x);
        u_norm = linalg::norm(&u);
        y_norm = linalg::norm(&y);
        if generator.wants_pairs() {
            pair_accepted = generator.notify_pair(&u, &y);
        }
        residual_z = Some(f_z);
    }

    Ok(StepOutcome {
        x_next,
        z,
        d,
        v,
        v_plus,
        residual: f_x,
        residual_z,
        sample,
        sample_plus,
        u_norm,
        y_norm,
        pair_accepted,
        ifo,
    })
}

/// One full iteration of the extra-step quasi-Newton method.
#[allow(clippy::too_many_arguments)]
pub fn seqn_step<R: Rng + ?Sized>(
    x: &[f64],
    problem: &dyn FiniteSumProblem,
    phi: &dyn ProxFunction,
    generator: &mut dyn DirectionGenerator,
    plan: &StepPlan,
    oracle: &OracleSetup,
    opts: &StepOptions,
    rng: &mut R,
) -> Result<StepOutcome, SolverError> {
    let prepared = prepare_step(x, problem, phi, plan, oracle, rng)?;
    complete_step(x, prepared, problem, phi, generator, plan, oracle, opts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::{IdentityDirection, LbfgsDirection};
    use crate::oracles::full_gradient;
    use crate::problems::QuadraticProblem;
    use crate::prox::L1Norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad() -> QuadraticProblem {
        QuadraticProblem::new(
            vec![vec![1.0, -2.0, 0.5], vec![0.0, 2.0, 0.1], vec![-1.0, 1.0, 3.0], vec![3.0, -2.0, 0.0]],
            vec![1.0, 2.0, 0.5, 1.5],
        )
    }

    fn setup(b: usize, reuse: bool) -> OracleSetup<'static> {
        OracleSetup {
            kind: OracleKind::Minibatch,
            snapshot: None,
            batch: b,
            batch_plus: b,
            reuse_batch: reuse,
        }
    }

    #[test]
    fn zero_weights_give_proximal_gradient() {
        let p = quad();
        let phi = L1Norm::new(0.3);
        let x = vec![0.2, -0.4, 1.0];
        let plan = StepPlan {
            lambda: 0.4,
            lambda_plus: 0.3,
            alpha: 0.0,
            beta: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = seqn_step(&x, &p, &phi, &mut IdentityDirection, &plan, &setup(4, true), &StepOptions::default(), &mut rng)
            .unwrap();
        let g = full_gradient(&p, &x).unwrap();
        let expect = phi.prox(ScaledMetric::new(0.3).unwrap(), &linalg::add_scaled(&x, -0.3, &g));
        assert_eq!(out.x_next, expect);
        // z = x, so v₊ is v and no second evaluation happens.
        assert_eq!(out.ifo, 4);
    }

    #[test]
    fn ifo_accounting_without_reuse() {
        let p = quad();
        let phi = L1Norm::new(0.1);
        let plan = StepPlan {
            lambda: 0.2,
            lambda_plus: 0.3,
            alpha: 1.0,
            beta: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = vec![1.0, 1.0, 1.0];
        let out = seqn_step(&x, &p, &phi, &mut IdentityDirection, &plan, &setup(2, false), &StepOptions::default(), &mut rng)
            .unwrap();
        assert_eq!(out.ifo, 4);
        assert!(out.residual_z.is_none());
        let mut gen = LbfgsDirection::new(5, 1e-4);
        let out = seqn_step(&x, &p, &phi, &mut gen, &plan, &setup(2, false), &StepOptions::default(), &mut rng).unwrap();
        let expected = if out.sample_plus == out.sample { 4 } else { 6 };
        assert_eq!(out.ifo, expected);
        assert!(out.residual_z.is_some());
    }

    #[test]
    fn pairs_use_the_same_sample_and_metric() {
        let p = quad();
        let phi = L1Norm::new(0.05);
        let plan = StepPlan {
            lambda: 0.25,
            lambda_plus: 0.25,
            alpha: 1.0,
            beta: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = vec![0.5, 0.5, -0.5];
        let mut gen = LbfgsDirection::new(5, 1e-4);
        let out = seqn_step(&x, &p, &phi, &mut gen, &plan, &setup(2, true), &StepOptions::default(), &mut rng).unwrap();
        let vz = oracle_at(OracleKind::Minibatch, &p, &out.z, &out.sample, None).unwrap();
        let fz = residual(&out.z, &vz, ScaledMetric::new(0.25).unwrap(), &phi).unwrap();
        assert_eq!(out.residual_z.as_ref().unwrap(), &fz);
        assert_eq!(out.v_plus, vz);
        assert!(out.pair_accepted);
        assert_eq!(gen.buffer().len(), 1);
    }

    #[test]
    fn clip_bounds_direction() {
        let p = quad();
        let phi = L1Norm::new(0.0);
        let plan = StepPlan {
            lambda: 1.0,
            lambda_plus: 0.1,
            alpha: 1.0,
            beta: 1.0,
        };
        let mut gen = LbfgsDirection::new(5, 1e-4);
        // A pair with tiny curvature makes the inverse-Hessian estimate huge.
        assert!(gen.notify_pair(&[1.0, 0.0, 0.0], &[1e-3, 0.0, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let opts = StepOptions {
            clip: Some(2.0),
            ..StepOptions::default()
        };
        let out = seqn_step(&[0.0; 3], &p, &phi, &mut gen, &plan, &setup(4, true), &opts, &mut rng).unwrap();
        assert!(linalg::norm(&out.d) <= 2.0 * linalg::norm(&out.residual) * (1.0 + 1e-12));
    }

    #[test]
    fn frozen_coordinates_are_restored_exactly() {
        let p = quad();
        let phi = L1Norm::new(0.2);
        let plan = StepPlan {
            lambda: 0.3,
            lambda_plus: 0.3,
            alpha: 1.0,
            beta: 1.0,
        };
        let x = vec![1e-11, 0.7, -3e-12];
        let frozen = [true, false, true];
        let opts = StepOptions {
            frozen: Some(&frozen),
            ..StepOptions::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gen = LbfgsDirection::new(5, 1e-4);
        let out = seqn_step(&x, &p, &phi, &mut gen, &plan, &setup(2, false), &opts, &mut rng).unwrap();
        assert_eq!(out.x_next[0].to_bits(), x[0].to_bits());
        assert_eq!(out.x_next[2].to_bits(), x[2].to_bits());
        assert_eq!((out.d[0], out.d[2]), (0.0, 0.0));
        assert_eq!((out.residual[0], out.residual[2]), (0.0, 0.0));
    }
}
