//! Exact scalar backend: finite sums `Σ cᵢ·√sᵢ` with rational coefficients
//! and distinct squarefree positive integer radicands.
//!
//! Distinct squarefree radicands are linearly independent over the rationals,
//! so the representation is canonical: two values are equal exactly when
//! their term maps coincide, and zero testing is trivial. The set is closed
//! under ring operations because the product of two squarefree numbers
//! factors as `√s₁·√s₂ = g·√((s₁/g)(s₂/g))` with `g = gcd(s₁, s₂)`, and the
//! cofactors are coprime and squarefree. No integer factorization is needed
//! for arithmetic; only the initial `√(rational)` constructor extracts square
//! parts, by trial division on small inputs.
//!
//! The type is a field: `invert` rationalizes the denominator by conjugating
//! one prime at a time (`√p → -√p`), which strictly shrinks the set of primes
//! under the radicals and terminates.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::bigint::{BigInt, BigUint};
use num::integer::Integer;
use num::traits::ToPrimitive;
use num::{BigRational, One, Signed, Zero};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exact {
    /// squarefree radicand -> nonzero rational coefficient
    terms: BTreeMap<BigUint, BigRational>,
}

/// Factor `n = c²·s` with `s` squarefree, by trial division.
fn extract_square(n: &BigUint) -> (BigUint, BigUint) {
    let one = BigUint::one();
    if n <= &one {
        return (one.clone(), n.clone());
    }
    if let Some(mut m) = n.to_u64() {
        let mut c: u64 = 1;
        let mut s: u64 = 1;
        let mut p: u64 = 2;
        while p.saturating_mul(p) <= m {
            if m % p == 0 {
                let mut e = 0u32;
                while m % p == 0 {
                    m /= p;
                    e += 1;
                }
                for _ in 0..e / 2 {
                    c = c.saturating_mul(p);
                }
                if e % 2 == 1 {
                    s = s.saturating_mul(p);
                }
            }
            p = if p == 2 { 3 } else { p + 2 };
        }
        if m > 1 {
            s = s.saturating_mul(m);
        }
        return (BigUint::from(c), BigUint::from(s));
    }
    // Rare big path: same loop over BigUint.
    let mut m = n.clone();
    let mut c = BigUint::one();
    let mut s = BigUint::one();
    let mut p = BigUint::from(2u32);
    while &p * &p <= m {
        if (&m % &p).is_zero() {
            let mut e = 0u32;
            while (&m % &p).is_zero() {
                m /= &p;
                e += 1;
            }
            for _ in 0..e / 2 {
                c *= &p;
            }
            if e % 2 == 1 {
                s *= &p;
            }
        }
        p = if p == BigUint::from(2u32) {
            BigUint::from(3u32)
        } else {
            p + BigUint::from(2u32)
        };
    }
    if m > BigUint::one() {
        s *= &m;
    }
    (c, s)
}

fn smallest_prime_factor(n: &BigUint) -> BigUint {
    debug_assert!(n > &BigUint::one());
    if let Some(m) = n.to_u64() {
        let mut p: u64 = 2;
        while p.saturating_mul(p) <= m {
            if m % p == 0 {
                return BigUint::from(p);
            }
            p = if p == 2 { 3 } else { p + 2 };
        }
        return BigUint::from(m);
    }
    let mut p = BigUint::from(2u32);
    while &p * &p <= *n {
        if (n % &p).is_zero() {
            return p;
        }
        p = if p == BigUint::from(2u32) {
            BigUint::from(3u32)
        } else {
            p + BigUint::from(2u32)
        };
    }
    n.clone()
}

impl Exact {
    pub fn from_big_rational(r: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(BigUint::one(), r);
        }
        Exact { terms }
    }

    pub fn integer(n: i64) -> Self {
        Self::from_big_rational(BigRational::from_integer(n.into()))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Self::from_big_rational(BigRational::new(num.into(), den.into()))
    }

    /// `sign · √(num/den)` for a nonnegative rational, normalized to
    /// coefficient-times-squarefree-radicand form.
    pub fn sqrt_of(r: &BigRational) -> Result<Self> {
        if r.is_negative() {
            return Err(Error::Invalid(format!("sqrt of negative rational {r}")));
        }
        if r.is_zero() {
            return Ok(Self::zero());
        }
        let a = r.numer().magnitude();
        let b = r.denom().magnitude();
        // sqrt(a/b) = sqrt(a*b)/b
        let (c, s) = extract_square(&(a * b));
        let coeff = BigRational::new(BigInt::from(c), BigInt::from(b.clone()));
        let mut terms = BTreeMap::new();
        terms.insert(s, coeff);
        Ok(Exact { terms })
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BigUint, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn insert_term(&mut self, s: BigUint, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(s) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn mul_exact(&self, other: &Exact) -> Exact {
        let mut out = Exact::zero();
        for (s1, c1) in &self.terms {
            for (s2, c2) in &other.terms {
                let g = s1.gcd(s2);
                let class = (s1 / &g) * (s2 / &g);
                let coeff = c1 * c2 * BigRational::from_integer(BigInt::from(g));
                out.insert_term(class, coeff);
            }
        }
        out
    }

    /// Galois conjugation `√p → -√p`: negate every term whose radicand is
    /// divisible by `p`.
    fn conjugate(&self, p: &BigUint) -> Exact {
        let terms = self
            .terms
            .iter()
            .map(|(s, c)| {
                if (s % p).is_zero() {
                    (s.clone(), -c.clone())
                } else {
                    (s.clone(), c.clone())
                }
            })
            .collect();
        Exact { terms }
    }

    fn first_radical_prime(&self) -> Option<BigUint> {
        self.terms
            .keys()
            .find(|s| *s > &BigUint::one())
            .map(smallest_prime_factor)
    }

    pub fn recip_exact(&self) -> Result<Exact> {
        if self.is_zero() {
            return Err(Error::Division("division by zero".into()));
        }
        let mut num = Exact::one();
        let mut den = self.clone();
        while let Some(p) = den.first_radical_prime() {
            let conj = den.conjugate(&p);
            num = num.mul_exact(&conj);
            den = den.mul_exact(&conj);
        }
        let r = den
            .rational_value()
            .expect("rationalized denominator must be rational");
        debug_assert!(!r.is_zero());
        Ok(num.mul_exact(&Exact::from_big_rational(r.recip())))
    }

    /// The value as a plain rational, if it is one.
    pub fn rational_value(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (s, c) = self.terms.iter().next().unwrap();
                if s.is_one() {
                    Some(c.clone())
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn approx_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(s, c)| {
                let sf = s.to_f64().unwrap_or(f64::INFINITY);
                ToPrimitive::to_f64(c).unwrap_or(f64::NAN) * sf.sqrt()
            })
            .sum()
    }

    /// Exact sign: -1, 0, or +1, decided by interval arithmetic with rational
    /// bounds on each `√s`, refined until the interval excludes zero.
    pub fn sign(&self) -> i32 {
        if self.is_zero() {
            return 0;
        }
        if self.terms.len() == 1 {
            let (_, c) = self.terms.iter().next().unwrap();
            return if c.is_positive() { 1 } else { -1 };
        }
        let mut bits: u32 = 16;
        loop {
            let scale = BigUint::one() << bits;
            let scale_int = BigInt::from(scale.clone());
            let mut lo = BigRational::zero();
            let mut hi = BigRational::zero();
            for (s, c) in &self.terms {
                // floor(sqrt(s * 4^bits)) / 2^bits <= sqrt(s) <= (floor+1)/2^bits
                let scaled = s * (&scale * &scale);
                let root = scaled.sqrt();
                let lo_s = BigRational::new(BigInt::from(root.clone()), scale_int.clone());
                let hi_s = BigRational::new(BigInt::from(root + BigUint::one()), scale_int.clone());
                if c.is_positive() {
                    lo += c * &lo_s;
                    hi += c * &hi_s;
                } else {
                    lo += c * &hi_s;
                    hi += c * &lo_s;
                }
            }
            if lo.is_positive() {
                return 1;
            }
            if hi.is_negative() {
                return -1;
            }
            bits *= 2;
            assert!(bits <= 1 << 16, "sign refinement failed to converge");
        }
    }

    /// Parse the textual form produced by `Display`:
    /// `-1/2*sqrt(2) + 3` etc. Accepts `rat`, `sqrt(n)`, `rat*sqrt(n)`.
    pub fn parse(input: &str) -> Result<Exact> {
        let mut out = Exact::zero();
        let s = input.trim();
        if s.is_empty() {
            return Err(Error::Parse("empty exact literal".into()));
        }
        let mut rest = s;
        let mut sign = 1i64;
        // leading sign
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1;
            rest = r.trim_start();
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r.trim_start();
        }
        loop {
            let term_end = {
                // find next top-level + or - (not inside sqrt(..) and not in "n/d")
                let mut idx = None;
                let mut depth = 0usize;
                for (i, ch) in rest.char_indices() {
                    match ch {
                        '(' => depth += 1,
                        ')' => depth = depth.saturating_sub(1),
                        '+' | '-' if depth == 0 && i > 0 => {
                            idx = Some(i);
                            break;
                        }
                        _ => {}
                    }
                }
                idx
            };
            let (term_str, next) = match term_end {
                Some(i) => (&rest[..i], Some(&rest[i..])),
                None => (rest, None),
            };
            let term_str = term_str.trim();
            let parsed = parse_term(term_str)?;
            let signed = if sign < 0 { -parsed } else { parsed };
            out = out + signed;
            match next {
                None => break,
                Some(n) => {
                    let mut chars = n.chars();
                    sign = if chars.next() == Some('-') { -1 } else { 1 };
                    rest = chars.as_str().trim_start();
                    if rest.is_empty() {
                        return Err(Error::Parse(format!("dangling operator in {input:?}")));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn parse_term(t: &str) -> Result<Exact> {
    let parse_radicand = |inner: &str| -> Result<BigUint> {
        inner
            .trim()
            .parse::<BigUint>()
            .map_err(|_| Error::Parse(format!("bad radicand in {t:?}")))
    };
    if let Some(rad) = t.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
        let s = parse_radicand(rad)?;
        return Exact::sqrt_of(&BigRational::from_integer(BigInt::from(s)));
    }
    if let Some((coeff, sq)) = t.split_once('*') {
        let c = crate::scalar::parse_rational(coeff)?;
        let rad = sq
            .trim()
            .strip_prefix("sqrt(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("expected sqrt(..) in {t:?}")))?;
        let s = parse_radicand(rad)?;
        let root = Exact::sqrt_of(&BigRational::from_integer(BigInt::from(s)))?;
        return Ok(Exact::from_big_rational(c).mul_exact(&root));
    }
    Ok(Exact::from_big_rational(crate::scalar::parse_rational(t)?))
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (s, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if s.is_one() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "sqrt({s})")?;
            } else {
                write!(f, "{mag}*sqrt({s})")?;
            }
        }
        Ok(())
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(mut self, rhs: Exact) -> Exact {
        for (s, c) in rhs.terms {
            self.insert_term(s, c);
        }
        self
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        self + (-rhs)
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(mut self) -> Exact {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
        self
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, rhs: Exact) -> Exact {
        self.mul_exact(&rhs)
    }
}

impl Zero for Exact {
    fn zero() -> Self {
        Exact {
            terms: BTreeMap::new(),
        }
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl One for Exact {
    fn one() -> Self {
        Exact::integer(1)
    }
}

impl Scalar for Exact {
    const EXACT: bool = true;

    fn from_rational(r: &BigRational) -> Self {
        Exact::from_big_rational(r.clone())
    }

    fn sqrt_rational(r: &BigRational) -> Result<Self> {
        Exact::sqrt_of(r)
    }

    fn sqrt(&self) -> Result<Self> {
        match self.rational_value() {
            Some(r) => Exact::sqrt_of(&r),
            None => Err(Error::Invalid(
                "exact sqrt is only defined for rational values".into(),
            )),
        }
    }

    fn invert(&self) -> Result<Self> {
        self.recip_exact()
    }

    fn mul_ref(&self, other: &Self) -> Self {
        self.mul_exact(other)
    }

    fn add_assign_ref(&mut self, other: &Self) {
        for (s, c) in &other.terms {
            self.insert_term(s.clone(), c.clone());
        }
    }

    fn abs_f64(&self) -> f64 {
        self.approx_f64().abs()
    }

    fn to_f64(&self) -> f64 {
        self.approx_f64()
    }

    fn as_rational(&self) -> Option<BigRational> {
        self.rational_value()
    }

    fn is_nonneg_within(&self, _tol: f64) -> bool {
        self.sign() >= 0
    }

    fn parse(text: &str) -> Result<Self> {
        Exact::parse(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sqrt_int(n: u64) -> Exact {
        Exact::sqrt_of(&BigRational::from_integer(n.into())).unwrap()
    }

    #[test]
    fn square_extraction_normalizes() {
        // sqrt(12) = 2*sqrt(3)
        let v = sqrt_int(12);
        let (s, c) = v.terms().next().unwrap();
        assert_eq!(s, &BigUint::from(3u32));
        assert_eq!(c, &BigRational::from_integer(2.into()));
        // sqrt(1/2) = (1/2) sqrt(2)
        let h = Exact::sqrt_of(&BigRational::new(1.into(), 2.into())).unwrap();
        let (s, c) = h.terms().next().unwrap();
        assert_eq!(s, &BigUint::from(2u32));
        assert_eq!(c, &BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn surd_products_use_gcd_classes() {
        // sqrt(6)*sqrt(10) = 2*sqrt(15)
        let prod = sqrt_int(6) * sqrt_int(10);
        assert_eq!(prod, Exact::integer(2) * sqrt_int(15));
        // sqrt(2)^2 = 2
        assert_eq!(sqrt_int(2) * sqrt_int(2), Exact::integer(2));
    }

    #[test]
    fn distinct_radicands_do_not_collapse() {
        let v = sqrt_int(2) - sqrt_int(3);
        assert!(!v.is_zero());
        assert_eq!(v.num_terms(), 2);
        let w = v.clone() + sqrt_int(3);
        assert_eq!(w, sqrt_int(2));
    }

    #[test]
    fn recip_of_multi_term_sums() {
        // 1/(1+sqrt(2)) = sqrt(2) - 1
        let x = Exact::one() + sqrt_int(2);
        let r = x.recip_exact().unwrap();
        assert_eq!(r, sqrt_int(2) - Exact::one());
        // three radicals
        let y = Exact::one() + sqrt_int(2) + sqrt_int(3) - sqrt_int(30);
        let ry = y.recip_exact().unwrap();
        assert_eq!(y * ry, Exact::one());
    }

    #[test]
    fn sign_decides_close_calls() {
        // 99/70 is slightly above sqrt(2)
        let v = Exact::ratio(99, 70) - sqrt_int(2);
        assert_eq!(v.sign(), 1);
        let w = sqrt_int(2) - Exact::ratio(99, 70);
        assert_eq!(w.sign(), -1);
        assert_eq!((sqrt_int(2) - sqrt_int(2)).sign(), 0);
    }

    #[test]
    fn display_parse_round_trip() {
        let v = Exact::ratio(-1, 2) * sqrt_int(2) + Exact::integer(3) - sqrt_int(5);
        let s = v.to_string();
        let back = Exact::parse(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(Exact::parse("0").unwrap(), Exact::zero());
        assert_eq!(Exact::parse("3/4").unwrap(), Exact::ratio(3, 4));
        assert_eq!(Exact::parse("sqrt(8)").unwrap(), sqrt_int(8));
    }

    proptest! {
        #[test]
        fn ring_axioms(
            a in small_exact(), b in small_exact(), c in small_exact()
        ) {
            let left = (a.clone() * b.clone()) * c.clone();
            let right = a.clone() * (b.clone() * c.clone());
            prop_assert_eq!(left, right);
            let dist = a.clone() * (b.clone() + c.clone());
            let expanded = a.clone() * b.clone() + a * c;
            prop_assert_eq!(dist, expanded);
        }

        #[test]
        fn recip_is_inverse(a in small_exact()) {
            prop_assume!(!a.is_zero());
            let r = a.recip_exact().unwrap();
            prop_assert_eq!(a * r, Exact::one());
        }

        #[test]
        fn sqrt_squares_back(n in 0i64..500, d in 1i64..60) {
            let r = BigRational::new(n.into(), d.into());
            let s = Exact::sqrt_of(&r).unwrap();
            prop_assert_eq!(s.clone() * s, Exact::from_big_rational(r));
        }
    }

    fn small_exact() -> impl Strategy<Value = Exact> {
        proptest::collection::vec((0u64..30, -6i64..6, 1i64..4), 0..4).prop_map(|parts| {
            let mut acc = Exact::zero();
            for (s, n, d) in parts {
                let root = sqrt_int(s);
                acc = acc + Exact::ratio(n, d) * root;
            }
            acc
        })
    }
}
