mod artifact;
mod compare;
mod data;
mod reference;
mod run;
mod synth;
mod verify;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "seqn", version, about = "Stochastic extra-step quasi-Newton solvers for l1-regularized logistic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver and write a per-epoch CSV trace.
    Run(run::RunArgs),
    /// Compute a high-accuracy optimal value and minimizer.
    Reference(reference::ReferenceArgs),
    /// Summarize several traces of the same dataset.
    Compare(compare::CompareArgs),
    /// Run the randomized property suites.
    Verify(verify::VerifyArgs),
    /// Write a synthetic LIBSVM dataset.
    Synth(synth::SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Reference(a) => reference::cmd_reference(a),
        Command::Compare(a) => compare::cmd_compare(a),
        Command::Verify(a) => verify::cmd_verify(a),
        Command::Synth(a) => synth::cmd_synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
