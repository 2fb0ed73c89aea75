//! Text formats: series literals, vector-field documents, coefficient files.
//!
//! A series literal is a header line `trunc_order N` followed by one entry
//! per line, `k0 k1 k2 re im`, where the two coefficient tokens are `p/q`
//! rationals in exact mode and decimal floats in float mode. A vector-field
//! document wraps two series blocks:
//!
//! ```text
//! # comments and blank lines are ignored
//! mode exact
//! lambda 1 0
//! trunc_order 8
//! F1
//! 1 1 0 1 0
//! end
//! F2
//! 1 0 1 1/2 0
//! end
//! ```
//!
//! Exact documents load in either arithmetic; float documents load exactly
//! into exact mode too (every double is a dyadic rational).

use crate::coeff::{C64, CRat, Coeff};
use crate::series::MultiSeries;
use crate::vfield::DiagSaddleNode;
use num_rational::BigRational;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Structure(String),
}

fn err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithMode {
    Exact,
    Float,
}

impl std::fmt::Display for ArithMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArithMode::Exact => write!(f, "exact"),
            ArithMode::Float => write!(f, "float"),
        }
    }
}

/// One parsed coefficient entry, kept as tokens so that exact content
/// survives a float-mode detour and vice versa.
#[derive(Debug, Clone)]
pub struct Entry {
    pub exps: [usize; 3],
    pub re: String,
    pub im: String,
    pub line: usize,
}

impl Entry {
    fn to_coeff<K: Coeff>(&self) -> Result<K, IoError> {
        K::parse_entry(&self.re, &self.im).map_err(|m| err(self.line, m))
    }
}

/// A parsed vector-field document, before committing to an arithmetic.
#[derive(Debug, Clone)]
pub struct VfDocument {
    pub mode: ArithMode,
    pub lambda: Entry,
    pub trunc_order: usize,
    pub f1: Vec<Entry>,
    pub f2: Vec<Entry>,
}

impl VfDocument {
    pub fn to_field<K: Coeff>(&self) -> Result<DiagSaddleNode<K>, IoError> {
        if K::EXACT && self.mode == ArithMode::Float {
            // Doubles are dyadic rationals; lift them exactly.
            let lift = |e: &Entry| -> Result<K, IoError> {
                let c: C64 = C64::parse_entry(&e.re, &e.im).map_err(|m| err(e.line, m))?;
                let re = BigRational::from_float(c.re)
                    .ok_or_else(|| err(e.line, "non-finite float"))?;
                let im = BigRational::from_float(c.im)
                    .ok_or_else(|| err(e.line, "non-finite float"))?;
                let exact = CRat::new(re, im);
                K::parse_entry(&format!("{}", exact.re), &format!("{}", exact.im))
                    .map_err(|m| err(e.line, m))
            };
            let lambda = lift(&self.lambda)?;
            let mut f1 = MultiSeries::zero(self.trunc_order);
            for e in &self.f1 {
                f1.add_term(e.exps, lift(e)?);
            }
            let mut f2 = MultiSeries::zero(self.trunc_order);
            for e in &self.f2 {
                f2.add_term(e.exps, lift(e)?);
            }
            return DiagSaddleNode::new(lambda, f1, f2)
                .map_err(|e| IoError::Structure(e.to_string()));
        }
        let lambda: K = self.lambda.to_coeff()?;
        let mut f1 = MultiSeries::zero(self.trunc_order);
        for e in &self.f1 {
            f1.add_term(e.exps, e.to_coeff()?);
        }
        let mut f2 = MultiSeries::zero(self.trunc_order);
        for e in &self.f2 {
            f2.add_term(e.exps, e.to_coeff()?);
        }
        DiagSaddleNode::new(lambda, f1, f2).map_err(|e| IoError::Structure(e.to_string()))
    }
}

fn parse_entry_line(line_no: usize, line: &str) -> Result<Entry, IoError> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(err(line_no, format!("expected `k0 k1 k2 re im`, got {} tokens", toks.len())));
    }
    let mut exps = [0usize; 3];
    for (i, t) in toks[..3].iter().enumerate() {
        exps[i] = t
            .parse()
            .map_err(|_| err(line_no, format!("bad exponent `{t}`")))?;
    }
    Ok(Entry { exps, re: toks[3].to_string(), im: toks[4].to_string(), line: line_no })
}

/// Parse a standalone series literal (`trunc_order` header plus entries).
pub fn parse_series<K: Coeff>(text: &str) -> Result<MultiSeries<K>, IoError> {
    let mut trunc: Option<usize> = None;
    let mut out: Option<MultiSeries<K>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("trunc_order") {
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("bad truncation order `{}`", rest.trim())))?;
            trunc = Some(n);
            out = Some(MultiSeries::zero(n));
            continue;
        }
        let series = out
            .as_mut()
            .ok_or_else(|| err(line_no, "entry before the `trunc_order` header"))?;
        let e = parse_entry_line(line_no, line)?;
        series.add_term(e.exps, e.to_coeff::<K>()?);
    }
    let _ = trunc;
    out.ok_or_else(|| IoError::Structure("missing `trunc_order` header".into()))
}

pub fn format_series<K: Coeff>(s: &MultiSeries<K>) -> String {
    let mut out = format!("trunc_order {}\n", s.trunc_order());
    for (e, c) in s.terms() {
        out.push_str(&format!("{} {} {} {}\n", e[0], e[1], e[2], c.format_entry()));
    }
    out
}

/// Parse a vector-field document.
pub fn parse_vector_field(text: &str) -> Result<VfDocument, IoError> {
    let mut mode: Option<ArithMode> = None;
    let mut lambda: Option<Entry> = None;
    let mut trunc: Option<usize> = None;
    let mut f1: Vec<Entry> = Vec::new();
    let mut f2: Vec<Entry> = Vec::new();
    let mut block: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("mode") {
            mode = Some(match rest.trim() {
                "exact" => ArithMode::Exact,
                "float" => ArithMode::Float,
                other => return Err(err(line_no, format!("unknown mode `{other}`"))),
            });
            continue;
        }
        if let Some(rest) = line.strip_prefix("lambda") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(err(line_no, "lambda needs two tokens: re im"));
            }
            lambda = Some(Entry {
                exps: [0, 0, 0],
                re: toks[0].into(),
                im: toks[1].into(),
                line: line_no,
            });
            continue;
        }
        if let Some(rest) = line.strip_prefix("trunc_order") {
            trunc = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| err(line_no, format!("bad truncation order `{}`", rest.trim())))?,
            );
            continue;
        }
        match line {
            "F1" => {
                block = Some(1);
                continue;
            }
            "F2" => {
                block = Some(2);
                continue;
            }
            "end" => {
                block = None;
                continue;
            }
            _ => {}
        }
        let which = block.ok_or_else(|| err(line_no, format!("unexpected line `{line}`")))?;
        let e = parse_entry_line(line_no, line)?;
        if which == 1 {
            f1.push(e);
        } else {
            f2.push(e);
        }
    }

    Ok(VfDocument {
        mode: mode.ok_or_else(|| IoError::Structure("missing `mode` line".into()))?,
        lambda: lambda.ok_or_else(|| IoError::Structure("missing `lambda` line".into()))?,
        trunc_order: trunc.ok_or_else(|| IoError::Structure("missing `trunc_order` line".into()))?,
        f1,
        f2,
    })
}

/// Write a field as a document in its own arithmetic.
pub fn format_vector_field<K: Coeff>(y: &DiagSaddleNode<K>) -> String {
    let mode = if K::EXACT { "exact" } else { "float" };
    let mut out = String::new();
    out.push_str(&format!("mode {mode}\n"));
    out.push_str(&format!("lambda {}\n", y.lambda().format_entry()));
    out.push_str(&format!("trunc_order {}\n", y.trunc_order()));
    out.push_str("F1\n");
    for (e, c) in y.f1().terms() {
        out.push_str(&format!("{} {} {} {}\n", e[0], e[1], e[2], c.format_entry()));
    }
    out.push_str("end\nF2\n");
    for (e, c) in y.f2().terms() {
        out.push_str(&format!("{} {} {} {}\n", e[0], e[1], e[2], c.format_entry()));
    }
    out.push_str("end\n");
    out
}

/// Coefficient file: one complex number per line (`re im`), index order.
pub fn parse_coefficients(text: &str) -> Result<Vec<C64>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(err(i + 1, format!("expected `re im`, got {} tokens", toks.len())));
        }
        out.push(C64::parse_entry(toks[0], toks[1]).map_err(|m| err(i + 1, m))?);
    }
    if out.is_empty() {
        return Err(IoError::Structure("no coefficients found".into()));
    }
    Ok(out)
}
