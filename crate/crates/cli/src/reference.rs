use crate::artifact::write_reference;
use crate::data::{load, DataArgs, Mu};
use anyhow::{Context, Result};
use clap::Args;
use seqn_core::solver::{run_reference, ReferenceOptions};
use seqn_core::{FiniteSumProblem, LogRegProblem};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "auto")]
    pub mu: Mu,
    /// Target for the unit-step residual norm.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iterations: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_reference(args: ReferenceArgs) -> Result<u8> {
    let data = load(&args.data)?;
    let mu = args.mu.resolve(data.train.num_samples());
    let problem = LogRegProblem::new(data.train, mu);
    let opts = ReferenceOptions {
        tol: args.tol,
        max_iterations: args.max_iterations,
        ..ReferenceOptions::default()
    };
    let r = run_reference(&problem, &problem.regularizer(), &vec![0.0; problem.dim()], &opts)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_reference(&mut w, r.psi_star, &r.x)?;
    w.flush()?;
    println!("psi_star={}", r.psi_star);
    eprintln!(
        "{} after {} iterations, residual {:.3e}",
        if r.converged { "converged" } else { "NOT converged" },
        r.iterations,
        r.residual_norm
    );
    Ok(if r.converged { 0 } else { 2 })
}
