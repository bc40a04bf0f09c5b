//! Plain-text field dumps.
//!
//! ```text
//! nls-field 1
//! dim 1
//! lo 0 0
//! hi 1 0
//! center 0.5 0
//! n 3
//! values
//! 0.1
//! 0.2
//! 0.1
//! ```
//!
//! Values are row-major and written in shortest round-trip form, so
//! `read_field(write_field(u)) == u` bit for bit.

use std::fmt::Write as _;

use crate::error::{NlsError, Result};
use crate::grid::{build_grid, DomainSpec, Field};

const MAGIC: &str = "nls-field 1";

pub fn write_field(u: &Field) -> String {
    let s = &u.grid.spec;
    let mut out = String::with_capacity(24 * u.len() + 128);
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dim {}", s.dim);
    let _ = writeln!(out, "lo {:?} {:?}", s.lo[0], s.lo[1]);
    let _ = writeln!(out, "hi {:?} {:?}", s.hi[0], s.hi[1]);
    let _ = writeln!(out, "center {:?} {:?}", s.star_center[0], s.star_center[1]);
    let _ = writeln!(out, "n {}", u.grid.n);
    let _ = writeln!(out, "values");
    for v in &u.values {
        let _ = writeln!(out, "{v:?}");
    }
    out
}

fn parse_pair(line: Option<&str>, key: &str) -> Result<[f64; 2]> {
    let line = line.ok_or_else(|| NlsError::Parse(format!("missing '{key}'")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(NlsError::Parse(format!("expected '{key}', got '{line}'")));
    }
    let mut vals = [0.0; 2];
    for v in vals.iter_mut() {
        *v = it
            .next()
            .ok_or_else(|| NlsError::Parse(format!("short '{key}' line")))?
            .parse()
            .map_err(|e| NlsError::Parse(format!("{key}: {e}")))?;
    }
    Ok(vals)
}

fn parse_int(line: Option<&str>, key: &str) -> Result<usize> {
    let line = line.ok_or_else(|| NlsError::Parse(format!("missing '{key}'")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => v
            .trim()
            .parse()
            .map_err(|e| NlsError::Parse(format!("{key}: {e}"))),
        _ => Err(NlsError::Parse(format!("expected '{key}', got '{line}'"))),
    }
}

pub fn read_field(text: &str) -> Result<Field> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(MAGIC) {
        return Err(NlsError::Parse("not a field dump".into()));
    }
    let dim = parse_int(lines.next(), "dim")?;
    let lo = parse_pair(lines.next(), "lo")?;
    let hi = parse_pair(lines.next(), "hi")?;
    let star_center = parse_pair(lines.next(), "center")?;
    let n = parse_int(lines.next(), "n")?;
    if lines.next() != Some("values") {
        return Err(NlsError::Parse("missing 'values'".into()));
    }
    let spec = DomainSpec {
        dim,
        lo,
        hi,
        star_center,
    };
    let grid = build_grid(spec, n)?;
    let values = lines
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| NlsError::Parse(format!("value '{l}': {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != grid.len() {
        return Err(NlsError::Parse(format!(
            "expected {} values, found {}",
            grid.len(),
            values.len()
        )));
    }
    Field::new(&grid, values)
}
