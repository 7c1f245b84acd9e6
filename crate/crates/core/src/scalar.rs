//! Scalar abstraction over the numeric backends.
//!
//! Every algebraic routine in this crate is generic over [`Scalar`], which is
//! implemented by three backends:
//!
//! * [`Exact`](crate::exact::Exact): sums of rational multiples of square
//!   roots, closed under ring operations; equality is decidable, so identity
//!   checks are genuinely exact.
//! * `f64`: floating point, compared against a tolerance.
//! * `Complex64`: needed only for circulant eigenstructure, where the
//!   eigenvector entries are roots of unity.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::complex::Complex64;
use num::traits::ToPrimitive;
use num::{BigRational, One, Zero};

use crate::error::{Error, Result};

pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
    + 'static
{
    /// Whether equality on this backend is exact (no tolerance involved).
    const EXACT: bool;

    fn from_rational(r: &BigRational) -> Self;

    fn from_int(n: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(n.into()))
    }

    /// The square root of a nonnegative rational, as a scalar.
    fn sqrt_rational(r: &BigRational) -> Result<Self>;

    /// Square root of a scalar already in the backend. The exact backend only
    /// supports arguments that are nonnegative rationals; anything else errors.
    fn sqrt(&self) -> Result<Self>;

    fn invert(&self) -> Result<Self>;

    fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.clone() * other.invert()?)
    }

    /// Multiplication through references, overridable to avoid clones on the
    /// heap-backed exact type.
    fn mul_ref(&self, other: &Self) -> Self {
        self.clone() * other.clone()
    }

    fn add_assign_ref(&mut self, other: &Self) {
        *self = self.clone() + other.clone();
    }

    /// Absolute value (modulus) as `f64`, for residual reports.
    fn abs_f64(&self) -> f64;

    /// Real-part approximation as `f64`.
    fn to_f64(&self) -> f64;

    /// If the scalar is a plain rational, return it.
    fn as_rational(&self) -> Option<BigRational>;

    /// Zero test: exact backends ignore the tolerance, floats use it.
    fn is_zero_within(&self, tol: f64) -> bool {
        if Self::EXACT {
            self.is_zero()
        } else {
            self.abs_f64() <= tol
        }
    }

    /// Nonnegativity test for positivity reports: exact backends decide by
    /// sign, floats allow `-tol`. Errors for scalars without a real order.
    fn is_nonneg_within(&self, tol: f64) -> bool;

    /// Parse a scalar from its display form. Every backend reads rational
    /// literals; the exact backend also reads surd sums, the float backends
    /// decimal/exponent notation (plus `a+bi` for the complex type).
    fn parse(text: &str) -> Result<Self> {
        Ok(Self::from_rational(&parse_rational(text)?))
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn sqrt_rational(r: &BigRational) -> Result<Self> {
        use num::Signed;
        if r.is_negative() {
            return Err(Error::Invalid(format!("sqrt of negative rational {r}")));
        }
        let num = r.numer().magnitude();
        let den = r.denom().magnitude();
        let (rn, rd) = (num.sqrt(), den.sqrt());
        if &(&rn * &rn) == num && &(&rd * &rd) == den {
            Ok(BigRational::new(rn.into(), rd.into()))
        } else {
            Err(Error::Invalid(format!(
                "{r} is not a perfect square; use the Exact backend for surds"
            )))
        }
    }

    fn sqrt(&self) -> Result<Self> {
        Self::sqrt_rational(self)
    }

    fn invert(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Division("division by zero".into()));
        }
        Ok(self.recip())
    }

    fn abs_f64(&self) -> f64 {
        rational_to_f64(self).abs()
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn as_rational(&self) -> Option<BigRational> {
        Some(self.clone())
    }

    fn is_nonneg_within(&self, _tol: f64) -> bool {
        use num::Signed;
        !self.is_negative()
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    ToPrimitive::to_f64(r).unwrap_or_else(|| {
        // Fall back through a scaled integer division for extreme magnitudes.
        ToPrimitive::to_f64(r.numer()).unwrap_or(f64::NAN)
            / ToPrimitive::to_f64(r.denom()).unwrap_or(f64::NAN)
    })
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r)
    }

    fn sqrt_rational(r: &BigRational) -> Result<Self> {
        let v = rational_to_f64(r);
        if v < 0.0 {
            return Err(Error::Invalid(format!("sqrt of negative rational {r}")));
        }
        Ok(v.sqrt())
    }

    fn sqrt(&self) -> Result<Self> {
        if *self < 0.0 {
            return Err(Error::Invalid(format!("sqrt of negative value {self}")));
        }
        Ok(f64::sqrt(*self))
    }

    fn invert(&self) -> Result<Self> {
        if *self == 0.0 {
            return Err(Error::Division("division by zero".into()));
        }
        Ok(1.0 / self)
    }

    fn abs_f64(&self) -> f64 {
        self.abs()
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn as_rational(&self) -> Option<BigRational> {
        BigRational::from_float(*self)
    }

    fn is_nonneg_within(&self, tol: f64) -> bool {
        *self >= -tol
    }

    fn parse(text: &str) -> Result<Self> {
        if let Ok(r) = parse_rational(text) {
            return Ok(rational_to_f64(&r));
        }
        text.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad float literal {text:?}")))
    }
}

impl Scalar for Complex64 {
    const EXACT: bool = false;

    fn from_rational(r: &BigRational) -> Self {
        Complex64::new(rational_to_f64(r), 0.0)
    }

    fn sqrt_rational(r: &BigRational) -> Result<Self> {
        let v = rational_to_f64(r);
        if v < 0.0 {
            return Err(Error::Invalid(format!("sqrt of negative rational {r}")));
        }
        Ok(Complex64::new(v.sqrt(), 0.0))
    }

    fn sqrt(&self) -> Result<Self> {
        Ok(Complex64::sqrt(*self))
    }

    fn invert(&self) -> Result<Self> {
        if self.norm() == 0.0 {
            return Err(Error::Division("division by zero".into()));
        }
        Ok(Complex64::new(1.0, 0.0) / self)
    }

    fn abs_f64(&self) -> f64 {
        self.norm()
    }

    fn to_f64(&self) -> f64 {
        self.re
    }

    fn as_rational(&self) -> Option<BigRational> {
        if self.im == 0.0 {
            BigRational::from_float(self.re)
        } else {
            None
        }
    }

    fn is_nonneg_within(&self, tol: f64) -> bool {
        self.im.abs() <= tol && self.re >= -tol
    }

    fn parse(text: &str) -> Result<Self> {
        if let Ok(re) = f64::parse(text) {
            return Ok(Complex64::new(re, 0.0));
        }
        text.trim()
            .parse::<Complex64>()
            .map_err(|_| Error::Parse(format!("bad complex literal {text:?}")))
    }
}

/// Parse a rational literal: `"3/4"`, `"-1/3"`, `"2"`, or a decimal like
/// `"0.25"` (decimals convert exactly, digit by digit).
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational literal".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: num::BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
        let d: num::BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let sign = if int_part.trim_start().starts_with('-') {
            -1
        } else {
            1
        };
        let int_digits = int_part.trim_start_matches(['+', '-']);
        let whole: num::BigInt = if int_digits.is_empty() {
            0.into()
        } else {
            int_digits
                .parse()
                .map_err(|_| Error::Parse(format!("bad decimal in {s:?}")))?
        };
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Parse(format!("bad decimal in {s:?}")));
        }
        let frac: num::BigInt = frac_part
            .parse()
            .map_err(|_| Error::Parse(format!("bad decimal in {s:?}")))?;
        let scale = num::BigInt::from(10u32).pow(frac_part.len() as u32);
        let val = BigRational::from_integer(whole) + BigRational::new(frac, scale);
        return Ok(BigRational::from_integer(sign.into()) * val);
    }
    let n: num::BigInt = s
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer literal {s:?}")))?;
    Ok(BigRational::from_integer(n))
}

pub fn big_rational(num: i64, den: i64) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Small nonnegative integer power by repeated multiplication.
pub fn pow_u32<S: Scalar>(base: &S, k: u32) -> S {
    let mut acc = S::one();
    for _ in 0..k {
        acc = acc.mul_ref(base);
    }
    acc
}
