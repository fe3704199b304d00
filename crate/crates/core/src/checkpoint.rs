//! Plain-text checkpoints for PS points.
//!
//! ```text
//! psman-point v1
//! <n> <k_1> ... <k_m>
//! <n lines of n space-separated floats>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so reading a written
//! file reproduces the matrix bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifold::{PartitionSpec, PsPoint, ORTHO_TOL};
use crate::matrix::{orthonormality_defect, Mat};

pub const MAGIC: &str = "psman-point v1";

pub fn to_string(p: &PsPoint) -> String {
    let spec = p.spec();
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&spec.n().to_string());
    for k in spec.sizes() {
        write!(out, " {k}").expect("writing to a String");
    }
    out.push('\n');
    for row in p.q().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn write<W: Write>(p: &PsPoint, mut w: W) -> Result<()> {
    w.write_all(to_string(p).as_bytes())?;
    Ok(())
}

pub fn save(p: &PsPoint, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(p))?;
    Ok(())
}

fn malformed(line: usize, msg: impl Into<String>) -> Error {
    Error::Checkpoint { line, msg: msg.into() }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| malformed(line, format!("expected a non-negative integer, found `{tok}`")))
}

/// Parses a checkpoint and checks that the matrix is orthogonal to
/// within the manifold tolerance. No repair is attempted.
pub fn read<R: BufRead>(r: R) -> Result<PsPoint> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((no, Ok(l))) => Ok((no, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(malformed(0, format!("unexpected end of file, expected {what}"))),
        }
    };

    let (no, magic) = next("the header")?;
    if magic.trim_end() != MAGIC {
        return Err(malformed(no, format!("expected `{MAGIC}`")));
    }

    let (no, dims) = next("the partition line")?;
    let mut toks = dims.split_whitespace();
    let n = parse_usize(toks.next().ok_or_else(|| malformed(no, "missing n"))?, no)?;
    let sizes = toks.map(|t| parse_usize(t, no)).collect::<Result<Vec<_>>>()?;
    let spec = PartitionSpec::new(n, sizes).map_err(|e| malformed(no, e.to_string()))?;

    let mut q = Mat::zeros(n, n);
    for i in 0..n {
        let (no, row) = next("a matrix row")?;
        let cells: Vec<&str> = row.split_whitespace().collect();
        if cells.len() != n {
            return Err(malformed(no, format!("expected {n} values, found {}", cells.len())));
        }
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 =
                cell.parse().map_err(|_| malformed(no, format!("column {}: `{cell}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(malformed(no, format!("column {}: non-finite value", j + 1)));
            }
            q[(i, j)] = v;
        }
    }
    if let Some((no, extra)) = lines.find(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty())) {
        extra?;
        return Err(malformed(no, "trailing content after the matrix"));
    }

    let defect = orthonormality_defect(&q);
    if defect > ORTHO_TOL {
        return Err(Error::NotOrthonormal { defect });
    }
    PsPoint::new(spec, q)
}

pub fn load(path: &Path) -> Result<PsPoint> {
    let file = std::fs::File::open(path)?;
    read(BufReader::new(file))
}
