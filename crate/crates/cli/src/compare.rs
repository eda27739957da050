use anyhow::{bail, Context, Result};
use clap::Args;
use seqn_core::trace::read_trace;
use seqn_core::TraceRecord;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Trace CSV files written by `seqn run`.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Threshold for epochs-to-tol; defaults to each run's own tol.
    #[arg(long)]
    pub tol: Option<f64>,
    /// JSON-lines mirror of the table.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub trace: String,
    pub method: String,
    pub seed: u64,
    pub epochs: f64,
    pub psi: f64,
    pub rel_err: Option<f64>,
    pub epochs_to_tol: Option<f64>,
    pub nnz: usize,
    pub test_acc: Option<f64>,
}

/// First epoch at which the run met `tol`: relative error when known,
/// otherwise the residual norm.
pub fn epochs_to_tol(records: &[TraceRecord], tol: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| {
            if r.rel_err.is_nan() {
                r.residual_norm <= tol
            } else {
                r.rel_err <= tol
            }
        })
        .map(|r| r.epoch)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn fmt_opt(v: Option<f64>, prec: usize, exp: bool) -> String {
    match v {
        Some(v) if exp => format!("{v:.prec$e}"),
        Some(v) => format!("{v:.prec$}"),
        None => "-".into(),
    }
}

fn argmin<T: PartialOrd + Copy>(items: impl Iterator<Item = Option<T>>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in items.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn cmd_compare(args: CompareArgs) -> Result<u8> {
    let mut summaries = Vec::new();
    let mut fingerprint: Option<String> = None;
    for path in &args.traces {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (manifest, records) =
            read_trace(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        match &fingerprint {
            None => fingerprint = Some(manifest.dataset_fingerprint.clone()),
            Some(f) if *f != manifest.dataset_fingerprint => {
                bail!("{} was run on a different dataset (fingerprint mismatch)", path.display())
            }
            Some(_) => {}
        }
        let Some(last) = records.last() else {
            bail!("{} has no rows", path.display());
        };
        let solver = &manifest.config["solver"];
        let method = solver["method"].as_str().unwrap_or("?");
        let label = match solver["direction"].as_str() {
            Some(d) if method.starts_with("seqn") => format!("{method}/{d}"),
            _ => method.to_string(),
        };
        let tol = args.tol.or_else(|| solver["tol"].as_f64()).unwrap_or(1e-6);
        summaries.push(Summary {
            trace: path.display().to_string(),
            method: label,
            seed: manifest.seed,
            epochs: last.epoch,
            psi: last.psi,
            rel_err: finite(last.rel_err),
            epochs_to_tol: epochs_to_tol(&records, tol),
            nnz: last.nnz,
            test_acc: finite(last.test_acc),
        });
    }

    let best_err = argmin(summaries.iter().map(|s| s.rel_err));
    let best_epochs = argmin(summaries.iter().map(|s| s.epochs_to_tol));
    let best_nnz = argmin(summaries.iter().map(|s| Some(s.nnz)));
    let star = |i: usize, best: Option<usize>| if best == Some(i) { "*" } else { " " };

    println!(
        "{:<28} {:>5} {:>8} {:>20} {:>11} {:>10} {:>8} {:>8}",
        "method", "seed", "epochs", "psi", "rel_err", "to_tol", "nnz", "test_acc"
    );
    for (i, s) in summaries.iter().enumerate() {
        println!(
            "{:<28} {:>5} {:>8.2} {:>20.12e} {:>10}{} {:>9}{} {:>7}{} {:>8}",
            s.method,
            s.seed,
            s.epochs,
            s.psi,
            fmt_opt(s.rel_err, 3, true),
            star(i, best_err),
            fmt_opt(s.epochs_to_tol, 2, false),
            star(i, best_epochs),
            s.nnz,
            star(i, best_nnz),
            fmt_opt(s.test_acc, 4, false),
        );
    }

    if let Some(path) = &args.jsonl {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for (i, s) in summaries.iter().enumerate() {
            let mut v = serde_json::to_value(s)?;
            v["best_rel_err"] = (best_err == Some(i)).into();
            v["best_epochs_to_tol"] = (best_epochs == Some(i)).into();
            v["best_nnz"] = (best_nnz == Some(i)).into();
            writeln!(w, "{v}")?;
        }
        w.flush()?;
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: f64, rel_err: f64, residual_norm: f64) -> TraceRecord {
        TraceRecord {
            epoch,
            wall_seconds: 0.0,
            psi: 1.0,
            rel_err,
            nnz: 0,
            train_acc: f64::NAN,
            test_acc: f64::NAN,
            residual_norm,
        }
    }

    #[test]
    fn epochs_to_tol_uses_rel_err_then_residual() {
        let rows = [row(0.0, 1.0, 1.0), row(1.0, 1e-7, 1.0), row(2.0, 1e-8, 1e-9)];
        assert_eq!(epochs_to_tol(&rows, 1e-6), Some(1.0));
        let rows = [row(0.0, f64::NAN, 1.0), row(1.0, f64::NAN, 1e-3), row(2.0, f64::NAN, 1e-7)];
        assert_eq!(epochs_to_tol(&rows, 1e-6), Some(2.0));
        assert_eq!(epochs_to_tol(&rows, 1e-8), None);
    }

    #[test]
    fn argmin_skips_missing() {
        assert_eq!(argmin([None, Some(3.0), Some(1.0), None].into_iter()), Some(2));
        assert_eq!(argmin([None::<f64>, None].into_iter()), None);
        assert_eq!(argmin([Some(2), Some(2)].into_iter()), Some(0));
    }
}
