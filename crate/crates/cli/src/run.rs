use crate::artifact::read_reference;
use crate::data::{load, DataArgs, Mu};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use seqn_core::data::accuracy;
use seqn_core::solver::{default_batch, rel_err_clamped, SgdStep};
use seqn_core::trace::write_trace;
use seqn_core::{
    Clock, DirectionKind, FiniteSumProblem, LogRegProblem, Method, Monitor, PolicyKind, RunManifest, RunStatus,
    SolverConfig,
};
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Seqn,
    SeqnVr,
    ProxSgd,
    ProxSvrg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum DirectionArg {
    Identity,
    Lbfgs,
    CoordLbfgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PolicyArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
    Adaptive,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "seqn-vr")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "coord-lbfgs")]
    pub direction: DirectionArg,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub policy: PolicyArg,
    /// l1 weight, or `auto` for 1/N.
    #[arg(long, default_value = "auto")]
    pub mu: Mu,
    /// Base seed; SEQN_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Parallel runs when --seeds > 1.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Budget in epochs.
    #[arg(long, default_value_t = 100.0)]
    pub epochs: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Inner iterations per snapshot.
    #[arg(long = "K")]
    pub inner: Option<usize>,
    /// Sample size for `v`; defaults to min(300, N/100).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Sample size for `v₊`; defaults to --batch.
    #[arg(long)]
    pub batch_plus: Option<usize>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub reuse_batch: bool,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub subspace: bool,
    /// Direction-norm bound used by the theory policies.
    #[arg(long, default_value_t = 10.0)]
    pub nu_bar: f64,
    /// Fixed step for prox-sgd / prox-svrg.
    #[arg(long)]
    pub step: Option<f64>,
    /// Hard cap on inner iterations, on top of the epoch budget.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Reference artifact providing psi_star.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Trace CSV; with --seeds > 1 the seed is appended to the file stem.
    #[arg(long)]
    pub out: PathBuf,
    /// Report zero wall time so repeated runs give identical files.
    #[arg(long)]
    pub frozen_clock: bool,
}

fn seed_override(base: u64) -> Result<u64> {
    match std::env::var("SEQN_SEED") {
        Ok(s) => s.trim().parse().with_context(|| format!("SEQN_SEED={s:?} is not an integer")),
        Err(_) => Ok(base),
    }
}

fn out_path(out: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}-s{seed}{ext}"))
}

pub fn solver_config(args: &RunArgs, seed: u64, mu: f64) -> SolverConfig {
    let method = match args.method {
        MethodArg::Seqn => Method::Seqn,
        MethodArg::SeqnVr => Method::SeqnVr,
        MethodArg::ProxSgd => Method::ProxSgd,
        MethodArg::ProxSvrg => Method::ProxSvrg,
    };
    SolverConfig {
        method,
        direction: match args.direction {
            DirectionArg::Identity => DirectionKind::Identity,
            DirectionArg::Lbfgs => DirectionKind::Lbfgs,
            DirectionArg::CoordLbfgs => DirectionKind::CoordLbfgs,
        },
        policy: match args.policy {
            PolicyArg::A => PolicyKind::A,
            PolicyArg::B => PolicyKind::B,
            PolicyArg::C => PolicyKind::C,
            PolicyArg::Adaptive => PolicyKind::Adaptive,
        },
        seed,
        epochs: args.epochs,
        tol: args.tol,
        max_iterations: args.max_iterations,
        inner_iterations: args.inner,
        batch: args.batch,
        batch_plus: args.batch_plus,
        reuse_batch: args.reuse_batch,
        subspace: args.subspace,
        mu,
        nu_bar: args.nu_bar,
        sgd_step: args.step.map(SgdStep::Constant),
        ..SolverConfig::default()
    }
}

pub fn cmd_run(args: RunArgs) -> Result<u8> {
    let base_seed = seed_override(args.seed)?;
    if args.seeds == 0 {
        anyhow::bail!("--seeds must be at least 1");
    }
    // Reject bad flag combinations before touching the data.
    solver_config(&args, base_seed, 0.0).validate()?;
    let data = load(&args.data)?;
    let mu = args.mu.resolve(data.train.num_samples());
    let psi_star = match &args.reference {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(read_reference(BufReader::new(f))?.psi_star)
        }
        None => None,
    };
    let problem = LogRegProblem::new(data.train.clone(), mu);
    let quasi_newton = !matches!(args.direction, DirectionArg::Identity)
        && matches!(args.method, MethodArg::Seqn | MethodArg::SeqnVr)
        && !matches!(args.policy, PolicyArg::C);
    let batch = args.batch.unwrap_or_else(|| default_batch(problem.num_components()));
    if quasi_newton && batch < problem.dim() {
        eprintln!(
            "warning: batch {batch} is smaller than the {} features; sampled curvature is rank-deficient and \
             quasi-Newton steps may be unstable (consider --batch or --direction identity)",
            problem.dim()
        );
    }
    let phi = problem.regularizer();
    let train = &data.train;
    let test = data.test.as_ref();
    let acc = move |x: &[f64]| {
        let a = accuracy(x, train).unwrap_or(f64::NAN);
        let b = test.map_or(f64::NAN, |t| accuracy(x, t).unwrap_or(f64::NAN));
        (a, b)
    };
    let many = args.seeds > 1;
    let seeds: Vec<u64> = (0..args.seeds).map(|k| base_seed + k).collect();

    let one = |seed: u64| -> Result<RunStatus> {
        let config = solver_config(&args, seed, mu);
        let clock = if args.frozen_clock { Clock::Frozen } else { Clock::wall() };
        let monitor = Monitor {
            psi_star,
            accuracy: Some(&acc),
            clock,
        };
        let manifest = RunManifest {
            config: json!({
                "solver": config,
                "data": args.data.data.display().to_string(),
                "test": args.data.test.as_ref().map(|p| p.display().to_string()),
                "split": args.data.split,
                "split_seed": args.data.split_seed,
                "samples": problem.num_components(),
                "features": problem.dim(),
                "psi_star": psi_star,
            }),
            seed,
            dataset_fingerprint: data.fingerprint.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: clock.unix_now(),
        };
        let x0 = vec![0.0; problem.dim()];
        let result = seqn_core::run(&problem, &phi, &x0, &config, &monitor)?;
        let path = out_path(&args.out, seed, many);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(BufWriter::new(file), &manifest, &result.trace)?;
        let last = result.trace.last().expect("trace has a first row");
        eprintln!(
            "seed {seed}: {:?} after {:.2} epochs, psi {:.12e}, rel_err {}, nnz {}",
            result.status,
            result.epochs,
            last.psi,
            psi_star.map_or("n/a".to_string(), |s| format!("{:.3e}", rel_err_clamped(last.psi, s))),
            last.nnz
        );
        Ok(result.status)
    };

    let statuses: Vec<Result<RunStatus>> = if args.jobs > 1 && many {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
        pool.install(|| seeds.par_iter().map(|&s| one(s)).collect())
    } else {
        seeds.iter().map(|&s| one(s)).collect()
    };
    let mut code = 0;
    for s in statuses {
        if s? == RunStatus::BudgetExhausted {
            code = 2;
        }
    }
    Ok(code)
}
