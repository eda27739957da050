//! Per-epoch trace rows, the run manifest and their CSV encoding.
//!
//! A trace file is one `# {manifest json}` line followed by a plain CSV table.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const TRACE_HEADER: &str = "epoch,wall_seconds,psi,rel_err,nnz,train_acc,test_acc,residual_norm";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected trace header {0:?}")]
    Header(String),
    #[error("trace has no manifest line")]
    MissingManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: f64,
    pub wall_seconds: f64,
    pub psi: f64,
    /// Raw value; may be slightly negative. NaN when no reference is known.
    pub rel_err: f64,
    pub nnz: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    /// `‖F^I(x)‖` with the exact gradient.
    pub residual_norm: f64,
}

impl TraceRecord {
    /// Bitwise equality, treating NaN fields as equal to NaN.
    pub fn same_bits(&self, other: &TraceRecord) -> bool {
        let f = |a: f64, b: f64| a.to_bits() == b.to_bits();
        f(self.epoch, other.epoch)
            && f(self.wall_seconds, other.wall_seconds)
            && f(self.psi, other.psi)
            && f(self.rel_err, other.rel_err)
            && self.nnz == other.nnz
            && f(self.train_acc, other.train_acc)
            && f(self.test_acc, other.test_acc)
            && f(self.residual_norm, other.residual_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub version: String,
    pub started_unix: u64,
}

/// Wall-clock source. `Frozen` reports zero everywhere so that repeated runs
/// produce byte-identical files.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    Wall(Instant),
    Frozen,
}

impl Clock {
    pub fn wall() -> Self {
        Clock::Wall(Instant::now())
    }

    pub fn elapsed(&self) -> f64 {
        match self {
            Clock::Wall(t) => t.elapsed().as_secs_f64(),
            Clock::Frozen => 0.0,
        }
    }

    pub fn unix_now(&self) -> u64 {
        match self {
            Clock::Wall(_) => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            Clock::Frozen => 0,
        }
    }
}

pub fn write_manifest<W: Write>(out: &mut W, manifest: &RunManifest) -> Result<(), TraceError> {
    writeln!(out, "# {}", serde_json::to_string(manifest)?)?;
    Ok(())
}

/// Writes the manifest line, then the header and rows.
pub fn write_trace<W: Write>(mut out: W, manifest: &RunManifest, records: &[TraceRecord]) -> Result<(), TraceError> {
    write_manifest(&mut out, manifest)?;
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(TRACE_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(mut input: R) -> Result<(RunManifest, Vec<TraceRecord>), TraceError> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let json = first.trim_end().strip_prefix("# ").ok_or(TraceError::MissingManifest)?;
    let manifest: RunManifest = serde_json::from_str(json)?;
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != TRACE_HEADER {
        return Err(TraceError::Header(header));
    }
    let records = rdr.deserialize().collect::<Result<Vec<TraceRecord>, _>>()?;
    Ok((manifest, records))
}
