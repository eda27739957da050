use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqn_core::data::{load_libsvm, split_train_test};
use seqn_core::Dataset;
use std::path::PathBuf;

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Training data in LIBSVM format (optionally gzipped).
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out data for the test accuracy column.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Feature dimension; defaults to the largest index seen.
    #[arg(long)]
    pub num_features: Option<usize>,
    /// Split --data into train/test with this training fraction.
    #[arg(long, conflicts_with = "test")]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

pub struct LoadedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub fingerprint: String,
}

pub fn load(args: &DataArgs) -> Result<LoadedData> {
    let (mut train, fingerprint) =
        load_libsvm(&args.data, args.num_features).with_context(|| format!("loading {}", args.data.display()))?;
    let mut test = match &args.test {
        Some(p) => Some(load_libsvm(p, args.num_features).with_context(|| format!("loading {}", p.display()))?.0),
        None => None,
    };
    if let Some(t) = test.take() {
        // Train and test files may disagree on the largest index.
        let n = train.num_features().max(t.num_features());
        train = train.with_num_features(n)?;
        test = Some(t.with_num_features(n)?);
    }
    if let Some(fraction) = args.split {
        let mut rng = ChaCha8Rng::seed_from_u64(args.split_seed);
        let (a, b) = split_train_test(&train, fraction, &mut rng)?;
        train = a;
        test = Some(b);
    }
    Ok(LoadedData {
        train,
        test,
        fingerprint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mu {
    Auto,
    Value(f64),
}

impl std::str::FromStr for Mu {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Mu::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Mu::Value(v)),
            _ => Err(format!("expected a nonnegative number or 'auto', got {s:?}")),
        }
    }
}

impl Mu {
    /// `auto` means `1/N` for `N` training samples.
    pub fn resolve(self, samples: usize) -> f64 {
        match self {
            Mu::Auto => 1.0 / samples as f64,
            Mu::Value(v) => v,
        }
    }
}
