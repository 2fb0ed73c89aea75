//! Scalar coefficients: exact Gaussian rationals and complex doubles.
//!
//! Every series operation in this crate is generic over [`Coeff`]. The two
//! implementations are `Complex<BigRational>` (exact mode, used for
//! certification: residuals are exactly zero or exactly not) and
//! `Complex<f64>` (float mode, used for everything numeric downstream).

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Complex number with exact rational real and imaginary parts.
pub type CRat = num_complex::Complex<BigRational>;

/// Complex double.
pub type C64 = Complex64;

/// Absolute threshold under which float-mode coefficients are dropped from
/// the canonical form. Exact mode strips exact zeros only.
pub const FLOAT_STRIP: f64 = 1e-30;

/// The scalar field of a computation. Implementors are `CRat` (exact) and
/// `C64` (float); which one a value carries is the computation's "mode".
pub trait Coeff:
    Clone
    + PartialEq
    + Debug
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
{
    /// True for exact arithmetic.
    const EXACT: bool;

    fn from_int(n: i64) -> Self;

    /// Gaussian integer constructor, `re + im*i`.
    fn from_ints(re: i64, im: i64) -> Self;

    /// `self / d`; `None` when `d` is zero (exact) or numerically zero (float).
    fn checked_div(&self, d: &Self) -> Option<Self>;

    /// Whether the canonical form drops this coefficient.
    fn should_strip(&self) -> bool;

    /// Magnitude estimate (exact values are converted through f64).
    fn abs_f64(&self) -> f64;

    fn to_c64(&self) -> C64;

    /// `n * self` for small integers.
    fn scale_int(&self, n: i64) -> Self;

    /// `self / n` for positive integers. Exact in both modes.
    fn div_nat(&self, n: u64) -> Self;

    /// `self / n` for nonzero signed integers.
    fn div_int(&self, n: i64) -> Self;

    /// Membership in the nonpositive rationals, decided exactly when the
    /// mode allows it. `None` in float mode (only a heuristic exists there).
    fn in_q_nonpositive(&self) -> Option<bool>;

    /// `Some(n)` when the value is the positive integer `n` (exactly in
    /// exact mode, within 1e-9 in float mode).
    fn as_positive_integer(&self) -> Option<u64>;

    /// Two whitespace-separated tokens, `re im`, in the document format:
    /// `p/q` rationals in exact mode, decimal floats in float mode.
    fn format_entry(&self) -> String;

    /// Parse the two tokens written by [`Coeff::format_entry`]. Exact mode
    /// also accepts plain integers; float mode accepts anything `f64` parses.
    fn parse_entry(re: &str, im: &str) -> Result<Self, String>;
}

fn parse_rational(tok: &str) -> Result<BigRational, String> {
    if let Some((num, den)) = tok.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| format!("bad rational numerator `{num}`"))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| format!("bad rational denominator `{den}`"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in `{tok}`"));
        }
        Ok(BigRational::new(n, d))
    } else {
        let n: BigInt = tok
            .trim()
            .parse()
            .map_err(|_| format!("bad integer `{tok}`"))?;
        Ok(BigRational::from_integer(n))
    }
}

impl Coeff for CRat {
    const EXACT: bool = true;

    fn from_int(n: i64) -> Self {
        CRat::new(BigRational::from_integer(n.into()), BigRational::zero())
    }

    fn from_ints(re: i64, im: i64) -> Self {
        CRat::new(
            BigRational::from_integer(re.into()),
            BigRational::from_integer(im.into()),
        )
    }

    fn checked_div(&self, d: &Self) -> Option<Self> {
        if d.is_zero() {
            None
        } else {
            Some(self / d)
        }
    }

    fn should_strip(&self) -> bool {
        self.is_zero()
    }

    fn abs_f64(&self) -> f64 {
        self.to_c64().norm()
    }

    fn to_c64(&self) -> C64 {
        C64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }

    fn scale_int(&self, n: i64) -> Self {
        let f = BigRational::from_integer(n.into());
        CRat::new(&self.re * &f, &self.im * &f)
    }

    fn div_nat(&self, n: u64) -> Self {
        let f = BigRational::from_integer(BigInt::from(n));
        CRat::new(&self.re / &f, &self.im / &f)
    }

    fn div_int(&self, n: i64) -> Self {
        let f = BigRational::from_integer(BigInt::from(n));
        CRat::new(&self.re / &f, &self.im / &f)
    }

    fn in_q_nonpositive(&self) -> Option<bool> {
        Some(self.im.is_zero() && !self.re.is_positive())
    }

    fn as_positive_integer(&self) -> Option<u64> {
        if self.im.is_zero() && self.re.is_integer() && self.re.is_positive() {
            self.re.to_integer().to_u64()
        } else {
            None
        }
    }

    fn format_entry(&self) -> String {
        format!("{} {}", self.re, self.im)
    }

    fn parse_entry(re: &str, im: &str) -> Result<Self, String> {
        Ok(CRat::new(parse_rational(re)?, parse_rational(im)?))
    }
}

impl Coeff for C64 {
    const EXACT: bool = false;

    fn from_int(n: i64) -> Self {
        C64::new(n as f64, 0.0)
    }

    fn from_ints(re: i64, im: i64) -> Self {
        C64::new(re as f64, im as f64)
    }

    fn checked_div(&self, d: &Self) -> Option<Self> {
        if d.norm() == 0.0 {
            None
        } else {
            Some(self / d)
        }
    }

    fn should_strip(&self) -> bool {
        self.re.abs() < FLOAT_STRIP && self.im.abs() < FLOAT_STRIP
    }

    fn abs_f64(&self) -> f64 {
        self.norm()
    }

    fn to_c64(&self) -> C64 {
        *self
    }

    fn scale_int(&self, n: i64) -> Self {
        self * n as f64
    }

    fn div_nat(&self, n: u64) -> Self {
        self / n as f64
    }

    fn div_int(&self, n: i64) -> Self {
        self / n as f64
    }

    fn in_q_nonpositive(&self) -> Option<bool> {
        None
    }

    fn as_positive_integer(&self) -> Option<u64> {
        if self.im.abs() <= 1e-9 && self.re > 0.5 {
            let r = self.re.round();
            if (self.re - r).abs() <= 1e-9 * r.max(1.0) {
                return Some(r as u64);
            }
        }
        None
    }

    fn format_entry(&self) -> String {
        format!("{:?} {:?}", self.re, self.im)
    }

    fn parse_entry(re: &str, im: &str) -> Result<Self, String> {
        // Accept rational tokens too, so exact documents load as floats.
        let one = |tok: &str| -> Result<f64, String> {
            if tok.contains('/') {
                return parse_rational(tok)?
                    .to_f64()
                    .ok_or_else(|| format!("rational `{tok}` out of range"));
            }
            tok.trim().parse().map_err(|_| format!("bad float `{tok}`"))
        };
        Ok(C64::new(one(re)?, one(im)?))
    }
}

/// Exact value of a Gaussian rational `re_n/re_d + (im_n/im_d) i`.
pub fn crat(re_n: i64, re_d: i64, im_n: i64, im_d: i64) -> CRat {
    CRat::new(
        BigRational::new(re_n.into(), re_d.into()),
        BigRational::new(im_n.into(), im_d.into()),
    )
}

/// Convert an exact value to float mode.
pub fn to_float(c: &CRat) -> C64 {
    c.to_c64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_field_axioms_on_random_triples() {
        // Associativity, commutativity, distributivity must hold exactly.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as i64 % 7) - 3
        };
        for _ in 0..200 {
            let a = crat(next(), 1 + next().abs(), next(), 1 + next().abs());
            let b = crat(next(), 1 + next().abs(), next(), 1 + next().abs());
            let c = crat(next(), 1 + next().abs(), next(), 1 + next().abs());
            assert_eq!((a.clone() + b.clone()) + c.clone(), a.clone() + (b.clone() + c.clone()));
            assert_eq!(a.clone() * b.clone(), b.clone() * a.clone());
            assert_eq!(
                a.clone() * (b.clone() + c.clone()),
                a.clone() * b.clone() + a.clone() * c.clone()
            );
        }
    }

    #[test]
    fn float_single_op_rounding() {
        // One multiply of moderate values stays within 2^-50 relative.
        let a = C64::new(1.0 / 3.0, 2.0 / 7.0);
        let b = C64::new(-5.0 / 11.0, 1.0 / 13.0);
        let exact = crat(1, 3, 2, 7) * crat(-5, 11, 1, 13);
        let err = (a * b - exact.to_c64()).norm() / exact.abs_f64();
        assert!(err <= 2f64.powi(-50), "relative error {err}");
    }

    #[test]
    fn entry_round_trip() {
        let c = crat(-7, 3, 22, 5);
        let s = c.format_entry();
        let toks: Vec<&str> = s.split_whitespace().collect();
        assert_eq!(CRat::parse_entry(toks[0], toks[1]).unwrap(), c);

        let f = C64::new(0.125, -3.5e-9);
        let s = f.format_entry();
        let toks: Vec<&str> = s.split_whitespace().collect();
        assert_eq!(C64::parse_entry(toks[0], toks[1]).unwrap(), f);
    }
}
