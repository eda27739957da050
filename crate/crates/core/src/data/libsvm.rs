use super::{DataError, Dataset, SparseRow};
use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

fn parse_label(tok: &str, line: usize) -> Result<f64, DataError> {
    let unknown = || DataError::UnknownLabel {
        line,
        label: tok.to_string(),
    };
    let v: f64 = tok.parse().map_err(|_| unknown())?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(unknown())
    }
}

fn parse_feature(tok: &str, line: usize) -> Result<(usize, f64), DataError> {
    let malformed = |reason| DataError::Malformed {
        line,
        token: tok.to_string(),
        reason,
    };
    let (idx, val) = tok.split_once(':').ok_or_else(|| malformed("expected idx:val"))?;
    let idx: usize = idx.parse().map_err(|_| malformed("bad feature index"))?;
    if idx == 0 {
        return Err(malformed("feature indices are 1-based"));
    }
    let val: f64 = val.parse().map_err(|_| malformed("bad feature value"))?;
    if !val.is_finite() {
        return Err(malformed("non-finite feature value"));
    }
    Ok((idx - 1, val))
}

fn parse_line(text: &str, line: usize) -> Result<Option<SparseRow>, DataError> {
    let text = text.split('#').next().unwrap_or("");
    let text = text.replace('\u{2212}', "-");
    let mut toks = text.split_whitespace();
    let Some(label) = toks.next() else {
        return Ok(None);
    };
    let label = parse_label(label, line)?;
    let mut feats = Vec::new();
    for tok in toks {
        feats.push(parse_feature(tok, line)?);
    }
    if feats.windows(2).any(|w| w[0].0 >= w[1].0) {
        feats.sort_by_key(|f| f.0);
        if let Some(w) = feats.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(DataError::DuplicateIndex {
                line,
                index: w[0].0 + 1,
            });
        }
    }
    let (indices, values) = feats.into_iter().unzip();
    Ok(Some(SparseRow {
        label,
        indices,
        values,
    }))
}

/// Parses `<label> <idx>:<val> ...` lines with 1-based indices. Labels 0/−1
/// map to −1 and 1/+1 to +1. Blank lines and `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(
    reader: R,
    name: &str,
    num_features: Option<usize>,
) -> Result<Dataset, DataError> {
    let mut rows = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(row) = parse_line(&line, k + 1)? {
            rows.push(row);
        }
    }
    Dataset::from_rows(name, rows, num_features)
}

pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    for r in dataset.rows() {
        write!(out, "{}", if r.label > 0.0 { "+1" } else { "-1" })?;
        for (&j, &v) in r.indices.iter().zip(r.values) {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gzip(path: &Path) -> std::io::Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Hex SHA-256 of the given bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads a (possibly gzipped) LIBSVM file; returns the dataset and the
/// fingerprint of the file bytes as stored on disk.
pub fn load_libsvm(path: &Path, num_features: Option<usize>) -> Result<(Dataset, String), DataError> {
    let raw = std::fs::read(path)?;
    let fp = fingerprint(&raw);
    let text = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        out
    } else {
        raw
    };
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string());
    let ds = parse_libsvm(BufReader::new(text.as_slice()), &name, num_features)?;
    Ok((ds, fp))
}
