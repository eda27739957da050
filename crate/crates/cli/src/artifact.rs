//! Reference artifact: `psi_star=<value>` then one `idx:val` line per
//! nonzero of `x*`, with 1-based indices as in LIBSVM files.

use anyhow::{bail, Context, Result};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceArtifact {
    pub psi_star: f64,
    /// 0-based index and value of each nonzero.
    pub entries: Vec<(usize, f64)>,
}

pub fn write_reference<W: Write>(mut out: W, psi_star: f64, x: &[f64]) -> std::io::Result<()> {
    writeln!(out, "psi_star={psi_star:?}")?;
    for (i, &v) in x.iter().enumerate() {
        if v != 0.0 {
            writeln!(out, "{}:{:?}", i + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_reference<R: BufRead>(input: R) -> Result<ReferenceArtifact> {
    let mut lines = input.lines();
    let first = lines.next().context("empty reference file")??;
    let Some(value) = first.trim().strip_prefix("psi_star=") else {
        bail!("reference file must start with psi_star=");
    };
    let psi_star: f64 = value.parse().with_context(|| format!("bad psi_star value {value:?}"))?;
    if !psi_star.is_finite() {
        bail!("psi_star is not finite");
    }
    let mut entries = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (i, v) = line
            .split_once(':')
            .with_context(|| format!("line {}: expected idx:val", k + 2))?;
        let i: usize = i.parse().with_context(|| format!("line {}: bad index", k + 2))?;
        if i == 0 {
            bail!("line {}: indices are 1-based", k + 2);
        }
        let v: f64 = v.parse().with_context(|| format!("line {}: bad value", k + 2))?;
        entries.push((i - 1, v));
    }
    Ok(ReferenceArtifact { psi_star, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let x = [0.0, 0.1 + 0.2, 0.0, -1.5e-300];
        let mut buf = Vec::new();
        write_reference(&mut buf, std::f64::consts::LN_2, &x).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "psi_star=0.6931471805599453\n2:0.30000000000000004\n4:-1.5e-300\n"
        );
        let a = read_reference(buf.as_slice()).unwrap();
        assert_eq!(a.psi_star, std::f64::consts::LN_2);
        assert_eq!(a.entries, vec![(1, 0.1 + 0.2), (3, -1.5e-300)]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_reference("".as_bytes()).is_err());
        assert!(read_reference("psi=1\n".as_bytes()).is_err());
        assert!(read_reference("psi_star=1\n0:1\n".as_bytes()).is_err());
        assert!(read_reference("psi_star=nan\n".as_bytes()).is_err());
    }
}
