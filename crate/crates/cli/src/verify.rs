use anyhow::{Context, Result};
use clap::Args;
use seqn_core::verify::{run_all, run_suite, soft_threshold_sign_bug, SuiteReport, VerifyOptions};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// One of prox, oracles, lbfgs, certificate, descent, pointdiff; all when omitted.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repeat with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Write failing reports as JSON lines.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Replace soft-thresholding with a sign-flipped variant.
    #[arg(long, hide = true)]
    pub inject_sign_bug: bool,
}

pub fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let mut reports: Vec<(u64, SuiteReport)> = Vec::new();
    for seed in args.seed..args.seed + args.seeds.max(1) {
        let mut opts = VerifyOptions {
            seed,
            ..VerifyOptions::default()
        };
        if args.inject_sign_bug {
            opts.threshold = soft_threshold_sign_bug;
        }
        let batch = match &args.suite {
            Some(s) => run_suite(s, &opts)?,
            None => run_all(&opts),
        };
        reports.extend(batch.into_iter().map(|r| (seed, r)));
    }

    let mut failed = 0;
    for (seed, r) in &reports {
        let mark = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{mark} {}/{} seed={seed} cases={} failures={}",
            r.suite, r.property, r.cases, r.failures
        );
        if let Some(c) = &r.counterexample {
            println!("  counterexample: {c}");
        }
        if !r.passed() {
            failed += 1;
        }
    }
    if let Some(path) = &args.dump {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for (seed, r) in reports.iter().filter(|(_, r)| !r.passed()) {
            let mut v = serde_json::to_value(r)?;
            v["seed"] = (*seed).into();
            writeln!(w, "{v}")?;
        }
        w.flush()?;
    }
    Ok(if failed > 0 { 3 } else { 0 })
}
