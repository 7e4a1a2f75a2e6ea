//! Plain-text serialization of a [`ConicProblem`].
//!
//! ```text
//! cones nonneg 3 soc 4 psd 2
//! rows 2
//! c <col> <value>
//! b <row> <value>
//! a <row> <col> <value>
//! ```
//!
//! Only nonzero entries are written. Values use shortest round-trip formatting.

use std::fmt::Write as _;

use super::{ConeBlock, ConeSpec, ConicProblem};
use crate::error::{Result, SlatError};

pub fn write_dump(p: &ConicProblem) -> String {
    let mut out = String::from("cones");
    for b in p.cone.blocks() {
        let (tag, d) = match *b {
            ConeBlock::Nonnegative(d) => ("nonneg", d),
            ConeBlock::SecondOrder(d) => ("soc", d),
            ConeBlock::SemidefiniteReal(n) => ("psd", n),
        };
        let _ = write!(out, " {tag} {d}");
    }
    let _ = writeln!(out, "\nrows {}", p.num_constraints());
    for (i, v) in p.c.iter().enumerate().filter(|e| *e.1 != 0.0) {
        let _ = writeln!(out, "c {i} {v:?}");
    }
    for (i, v) in p.b.iter().enumerate().filter(|e| *e.1 != 0.0) {
        let _ = writeln!(out, "b {i} {v:?}");
    }
    for (i, row) in p.a.rows().enumerate() {
        for &(c, v) in row {
            let _ = writeln!(out, "a {i} {c} {v:?}");
        }
    }
    out
}

fn parse_err(line: usize, msg: &str) -> SlatError {
    SlatError::Parse(format!("conic dump line {}: {msg}", line + 1))
}

pub fn parse_dump(text: &str) -> Result<ConicProblem> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, header) = lines.next().ok_or_else(|| SlatError::Parse("empty conic dump".into()))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some("cones") {
        return Err(parse_err(ln, "expected 'cones'"));
    }
    let mut blocks = Vec::new();
    while let Some(tag) = tok.next() {
        let d: usize = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(ln, "cone size missing"))?;
        blocks.push(match tag {
            "nonneg" => ConeBlock::Nonnegative(d),
            "soc" => ConeBlock::SecondOrder(d),
            "psd" => ConeBlock::SemidefiniteReal(d),
            _ => return Err(parse_err(ln, &format!("unknown cone '{tag}'"))),
        });
    }
    let mut p = ConicProblem::new(ConeSpec::new(blocks)?);
    let (ln, rows_line) = lines.next().ok_or_else(|| SlatError::Parse("missing 'rows' line".into()))?;
    let m: usize = rows_line
        .strip_prefix("rows ")
        .and_then(|t| t.trim().parse().ok())
        .ok_or_else(|| parse_err(ln, "expected 'rows <m>'"))?;
    p.b = vec![0.0; m];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let n = p.num_vars();
    for (ln, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let idx = |k: usize, bound: usize| -> Result<usize> {
            let v: usize = parts.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(ln, "bad index"))?;
            if v >= bound {
                return Err(parse_err(ln, "index out of range"));
            }
            Ok(v)
        };
        let val = |k: usize| -> Result<f64> {
            parts.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(ln, "bad value"))
        };
        match parts.first().copied() {
            Some("c") => p.c[idx(1, n)?] = val(2)?,
            Some("b") => p.b[idx(1, m)?] = val(2)?,
            Some("a") => rows[idx(1, m)?].push((idx(2, n)?, val(3)?)),
            _ => return Err(parse_err(ln, "unknown record")),
        }
    }
    for row in rows {
        p.a.push_row(row)?;
    }
    Ok(p)
}
