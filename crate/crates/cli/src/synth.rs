use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use seqn_core::data::synthetic::{dense_logistic, sparse_logistic, DenseSpec, SparseSpec};
use seqn_core::data::write_libsvm;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Kind {
    Dense,
    Sparse,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "dense")]
    pub kind: Kind,
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub features: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Neighbouring-column correlation (dense only).
    #[arg(long, default_value_t = 0.0)]
    pub correlation: f64,
    /// Per-entry standard deviation (dense only).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Nonzeros per row (sparse only).
    #[arg(long)]
    pub row_nnz: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: SynthArgs) -> Result<u8> {
    if args.samples == 0 || args.features == 0 {
        anyhow::bail!("--samples and --features must be positive");
    }
    let data = match args.kind {
        Kind::Dense => {
            if !(-1.0 < args.correlation && args.correlation < 1.0) {
                anyhow::bail!("--correlation must lie in (-1, 1)");
            }
            let mut spec = DenseSpec::new(args.samples, args.features, args.seed);
            if !(args.scale > 0.0 && args.scale.is_finite()) {
                anyhow::bail!("--scale must be positive");
            }
            spec.correlation = args.correlation;
            spec.scale = args.scale;
            dense_logistic(&spec)
        }
        Kind::Sparse => {
            let mut spec = SparseSpec::new(args.samples, args.features, args.seed);
            if let Some(k) = args.row_nnz {
                spec.row_nnz = k;
            }
            sparse_logistic(&spec)
        }
    };
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_libsvm(&data, &mut w)?;
    w.flush()?;
    Ok(0)
}
