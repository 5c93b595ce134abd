//! Textual matrix format.
//!
//! ```text
//! layout: S:2,A:2
//! 0.7071067811865476,0.0
//! 0.0,0.0
//! ...
//! ```
//!
//! The header names the factors in order. Each following line holds one
//! `re,im` entry; states list `dim` entries, operators `dim²` entries in
//! row-major order. Blank lines and lines starting with `#` are skipped.

use crate::linalg::{CMatrix, CVector};
use crate::C64;

use super::{DensityOperator, HilbertError, Observable, PureState, SpaceLayout};

/// Largest total dimension accepted from text.
pub const MAX_TEXT_DIM: usize = 1 << 14;

/// Parsed but not yet validated content of a matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixText {
    pub layout: SpaceLayout,
    pub entries: Vec<C64>,
}

fn perr(line: usize, msg: impl Into<String>) -> HilbertError {
    HilbertError::Parse { line, msg: msg.into() }
}

fn parse_layout(spec: &str, line: usize) -> Result<SpaceLayout, HilbertError> {
    let mut factors = Vec::new();
    for part in spec.split(',') {
        let (label, dim) = part
            .trim()
            .split_once(':')
            .ok_or_else(|| perr(line, format!("factor `{part}` is not `label:dim`")))?;
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|_| perr(line, format!("bad dimension `{dim}`")))?;
        factors.push((label.trim().to_string(), dim));
    }
    factors
        .iter()
        .try_fold(1usize, |acc, (_, d)| acc.checked_mul(*d))
        .filter(|&d| d <= MAX_TEXT_DIM)
        .ok_or_else(|| perr(line, format!("total dimension exceeds {MAX_TEXT_DIM}")))?;
    SpaceLayout::new(factors).map_err(|e| perr(line, e.to_string()))
}

fn parse_entry(s: &str, line: usize) -> Result<C64, HilbertError> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| perr(line, format!("entry `{s}` is not `re,im`")))?;
    let num = |x: &str| -> Result<f64, HilbertError> {
        let v: f64 = x
            .trim()
            .parse()
            .map_err(|_| perr(line, format!("bad number `{}`", x.trim())))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(perr(line, "non-finite number"))
        }
    };
    Ok(C64::new(num(re)?, num(im)?))
}

pub fn parse(text: &str) -> Result<MatrixText, HilbertError> {
    let mut layout = None;
    let mut entries = Vec::new();
    let mut limit = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match &layout {
            None => {
                let rest = line
                    .strip_prefix("layout:")
                    .ok_or_else(|| perr(lineno, "expected `layout:` header"))?;
                let l = parse_layout(rest, lineno)?;
                limit = l.dim() * l.dim();
                layout = Some(l);
            }
            Some(_) => {
                if entries.len() == limit {
                    return Err(perr(lineno, "too many entries"));
                }
                entries.push(parse_entry(line, lineno)?);
            }
        }
    }
    let layout = layout.ok_or_else(|| perr(0, "missing `layout:` header"))?;
    Ok(MatrixText { layout, entries })
}

fn write(layout: &SpaceLayout, entries: impl Iterator<Item = C64>) -> String {
    let mut s = format!("layout: {}\n", layout.header());
    for z in entries {
        s.push_str(&format!("{:?},{:?}\n", z.re, z.im));
    }
    s
}

fn row_major(m: &CMatrix) -> impl Iterator<Item = C64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

fn as_matrix(t: MatrixText) -> Result<(SpaceLayout, CMatrix), HilbertError> {
    let d = t.layout.dim();
    if t.entries.len() != d * d {
        return Err(perr(0, format!("expected {} operator entries, found {}", d * d, t.entries.len())));
    }
    Ok((t.layout, CMatrix::from_row_slice(d, d, &t.entries)))
}

impl PureState {
    pub fn to_text(&self) -> String {
        write(self.layout(), self.amplitudes().iter().copied())
    }

    pub fn from_text(text: &str) -> Result<Self, HilbertError> {
        let t = parse(text)?;
        let d = t.layout.dim();
        if t.entries.len() != d {
            return Err(perr(0, format!("expected {d} state entries, found {}", t.entries.len())));
        }
        PureState::new(t.layout, CVector::from_vec(t.entries))
    }
}

impl DensityOperator {
    pub fn to_text(&self) -> String {
        write(self.layout(), row_major(self.matrix()))
    }

    pub fn from_text(text: &str) -> Result<Self, HilbertError> {
        let (layout, m) = as_matrix(parse(text)?)?;
        DensityOperator::new(layout, m)
    }
}

impl Observable {
    pub fn to_text(&self) -> String {
        write(self.layout(), row_major(self.matrix()))
    }

    pub fn from_text(text: &str) -> Result<Self, HilbertError> {
        let (layout, m) = as_matrix(parse(text)?)?;
        Observable::new(layout, m)
    }
}
