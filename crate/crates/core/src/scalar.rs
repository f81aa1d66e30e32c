//! Numeric backends.
//!
//! Every computation in the crate is generic over [`Scalar`]. Two backends
//! ship: [`Exact`] (arbitrary-precision rationals, comparisons are exact) and
//! `f64` (comparisons treat values within [`FLOAT_TOLERANCE`] as equal).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational arithmetic.
pub type Exact = BigRational;

/// Tolerance used by the float backend for sum-to-one and CDF comparisons.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// `true` for backends whose comparisons certify strict inequalities.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Parses `num/den`, a decimal (`0.25`), or scientific notation (`1e-8`).
    fn parse_literal(s: &str) -> Result<Self>;
    /// Tolerance-aware comparison. Exact for rationals.
    fn cmp_tol(&self, other: &Self) -> Ordering;
    /// Renders as an exact fraction where possible.
    fn to_fraction_string(&self) -> String;

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }

    fn pow(&self, exp: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    fn is_zero_tol(&self) -> bool {
        self.cmp_tol(&Self::zero()) == Ordering::Equal
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self.cmp_tol(other) == Ordering::Equal
    }

    fn ge_tol(&self, other: &Self) -> bool {
        self.cmp_tol(other) != Ordering::Less
    }

    fn gt_tol(&self, other: &Self) -> bool {
        self.cmp_tol(other) == Ordering::Greater
    }

    fn le_tol(&self, other: &Self) -> bool {
        self.cmp_tol(other) != Ordering::Greater
    }

    fn lt_tol(&self, other: &Self) -> bool {
        self.cmp_tol(other) == Ordering::Less
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    /// `true` when `0 <= self <= 1` under the backend's comparison.
    fn in_unit_interval(&self) -> bool {
        self.ge_tol(&Self::zero()) && self.le_tol(&Self::one())
    }
}

impl Scalar for Exact {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }

    fn one() -> Self {
        One::one()
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_literal(s: &str) -> Result<Self> {
        parse_exact(s)
    }

    fn cmp_tol(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }

    fn to_fraction_string(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse_literal(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| Error::parse(s, "bad numerator"))?;
            let d: f64 = d.trim().parse().map_err(|_| Error::parse(s, "bad denominator"))?;
            if d == 0.0 {
                return Err(Error::parse(s, "zero denominator"));
            }
            return Ok(n / d);
        }
        t.parse().map_err(|_| Error::parse(s, "not a number"))
    }

    fn cmp_tol(&self, other: &Self) -> Ordering {
        let d = self - other;
        if d.abs() <= FLOAT_TOLERANCE {
            Ordering::Equal
        } else if d < 0.0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    fn to_fraction_string(&self) -> String {
        format!("{self}")
    }
}

fn parse_exact(s: &str) -> Result<Exact> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::parse(s, "empty literal"));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_exact_decimal(n.trim()).ok_or_else(|| Error::parse(s, "bad numerator"))?;
        let d = parse_exact_decimal(d.trim()).ok_or_else(|| Error::parse(s, "bad denominator"))?;
        if d.is_zero() {
            return Err(Error::parse(s, "zero denominator"));
        }
        return Ok(n / d);
    }
    parse_exact_decimal(t).ok_or_else(|| Error::parse(s, "not a number"))
}

/// Decimal (optionally with exponent) to an exact rational, e.g. `1.5e-3`.
fn parse_exact_decimal(t: &str) -> Option<Exact> {
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if all_digits.is_empty() {
        BigInt::zero()
    } else {
        all_digits.parse().ok()?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// Absolute value for any backend.
pub fn abs<S: Scalar>(x: &S) -> S {
    if *x < S::zero() {
        -x.clone()
    } else {
        x.clone()
    }
}

/// Binomial coefficient as a scalar. Exact for rationals.
pub fn binomial<S: Scalar>(n: usize, k: usize) -> S {
    if k > n {
        return S::zero();
    }
    let k = k.min(n - k);
    let mut acc = S::one();
    for i in 0..k {
        acc = acc * S::from_usize(n - i) / S::from_usize(i + 1);
    }
    acc
}

/// Converts an `f64` into an exact rational without rounding.
pub fn exact_from_f64(x: f64) -> Option<Exact> {
    BigRational::from_float(x)
}

/// `true` when `x` is negative under exact or tolerance comparison.
pub fn is_negative<S: Scalar>(x: &S) -> bool {
    x.lt_tol(&S::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    #[test]
    fn parses_fractions_decimals_and_exponents() {
        assert_eq!(Exact::parse_literal("3/10").unwrap(), q(3, 10));
        assert_eq!(Exact::parse_literal("0.000001").unwrap(), q(1, 1_000_000));
        assert_eq!(Exact::parse_literal("1e-8").unwrap(), q(1, 100_000_000));
        assert_eq!(Exact::parse_literal(".5").unwrap(), q(1, 2));
        assert_eq!(Exact::parse_literal("-2.5e1").unwrap(), q(-25, 1));
        assert_eq!(Exact::parse_literal("0.5/2").unwrap(), q(1, 4));
        assert!(Exact::parse_literal("1/0").is_err());
        assert!(Exact::parse_literal("abc").is_err());
        assert!(Exact::parse_literal("").is_err());
        assert_eq!(f64::parse_literal("1/4").unwrap(), 0.25);
    }

    #[test]
    fn float_comparison_uses_tolerance() {
        assert_eq!(0.1f64.cmp_tol(&(0.1 + 1e-14)), Ordering::Equal);
        assert_eq!(0.1f64.cmp_tol(&0.1000001), Ordering::Less);
        let a = 1.0f64 / 12.0 + 5.0 / 12.0;
        assert!(a.approx_eq(&0.5));
    }

    #[test]
    fn binomial_and_pow() {
        assert_eq!(binomial::<Exact>(18, 6), q(18564, 1));
        assert_eq!(binomial::<Exact>(5, 7), q(0, 1));
        assert_eq!(q(2, 3).pow(3), q(8, 27));
        assert_eq!(q(2, 3).pow(0), q(1, 1));
    }

    #[test]
    fn fraction_rendering() {
        assert_eq!(q(1, 10).to_fraction_string(), "1/10");
        assert_eq!(q(4, 4).to_fraction_string(), "1");
    }
}
