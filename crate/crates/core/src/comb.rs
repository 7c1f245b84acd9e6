//! Compositions of `N` into `d` parts, multi-indices of total degree at most
//! `N`, and the factorial-family helpers used throughout.
//!
//! Canonical orders, used by every table and kernel in the crate:
//! * compositions: lexicographically descending, so `(N,0,…,0)` first and
//!   `(0,…,0,N)` last;
//! * multi-indices: graded, degree ascending, lexicographically descending
//!   within each degree, so the zero index comes first.

use std::collections::HashMap;

use num::bigint::{BigInt, BigUint};
use num::{BigRational, One, Zero};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn factorial(n: u32) -> BigUint {
    let mut acc = BigUint::one();
    for k in 2..=n as u64 {
        acc *= BigUint::from(k);
    }
    acc
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `(Σ parts)! / ∏ partsᵢ!`
pub fn multinomial(parts: &[u32]) -> BigUint {
    let mut acc = BigUint::one();
    let mut seen: u64 = 0;
    for &part in parts {
        seen += u64::from(part);
        acc *= binomial(seen, u64::from(part));
    }
    acc
}

pub fn big_to_rational(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

/// Rising factorial `a (a+1) ⋯ (a+k-1)` over any scalar backend.
pub fn rising<S: Scalar>(a: &S, k: u32) -> S {
    let mut acc = S::one();
    let mut term = a.clone();
    for _ in 0..k {
        acc = acc * term.clone();
        term = term + S::one();
    }
    acc
}

/// Falling factorial `a (a-1) ⋯ (a-k+1)`.
pub fn falling<S: Scalar>(a: &S, k: u32) -> S {
    let mut acc = S::one();
    let mut term = a.clone();
    for _ in 0..k {
        acc = acc * term.clone();
        term = term - S::one();
    }
    acc
}

/// Integer rising factorial as a rational, for coefficient work.
pub fn rising_int(a: i64, k: u32) -> BigRational {
    let mut acc = BigRational::one();
    for i in 0..i64::from(k) {
        acc *= BigRational::from_integer((a + i).into());
    }
    acc
}

/// Extend a multi-index `n` over `d-1` slots to the composition
/// `n⁺ = (N - |n|, n₁, …, n_{d-1})` of `N`.
pub fn extended(n: &[u32], total: u32) -> Vec<u32> {
    let deg: u32 = n.iter().sum();
    debug_assert!(deg <= total);
    let mut out = Vec::with_capacity(n.len() + 1);
    out.push(total - deg);
    out.extend_from_slice(n);
    out
}

fn compositions_rec(d: usize, n: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if d == 1 {
        prefix.push(n);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=n).rev() {
        prefix.push(first);
        compositions_rec(d - 1, n - first, prefix, out);
        prefix.pop();
    }
}

/// All compositions of `n` into `d` nonnegative parts, lexicographically
/// descending. Errors when the count would exceed `capacity`.
pub fn compositions(d: usize, n: u32, capacity: u128) -> Result<Vec<Vec<u32>>> {
    if d == 0 {
        return Err(Error::Dimension("need at least one part".into()));
    }
    let count = binomial((d as u64 - 1) + u64::from(n), u64::from(n));
    let count: u128 = count
        .try_into()
        .map_err(|_| Error::Capacity {
            needed: u128::MAX,
            limit: capacity,
        })?;
    if count > capacity {
        return Err(Error::Capacity {
            needed: count,
            limit: capacity,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    compositions_rec(d, n, &mut Vec::with_capacity(d), &mut out);
    Ok(out)
}

/// The state space `χ(d, N)`: compositions of `N` into `d` parts in canonical
/// order, with constant-time lookup of a composition's position.
#[derive(Clone, Debug)]
pub struct CompositionSpace {
    pub d: usize,
    pub n: u32,
    items: Vec<Vec<u32>>,
    pos: HashMap<Vec<u32>, usize>,
}

impl CompositionSpace {
    pub fn new(d: usize, n: u32, capacity: u128) -> Result<Self> {
        let items = compositions(d, n, capacity)?;
        let pos = items
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), i))
            .collect();
        Ok(CompositionSpace { d, n, items, pos })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.items[i]
    }

    pub fn index_of(&self, x: &[u32]) -> Option<usize> {
        self.pos.get(x).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.items.iter()
    }
}

/// Multi-indices `n` over `parts` slots with `|n| ≤ max_degree`, in graded
/// order. For a `d`-colour system `parts = d - 1`.
#[derive(Clone, Debug)]
pub struct MultiIndexSet {
    pub parts: usize,
    pub max_degree: u32,
    items: Vec<Vec<u32>>,
    pos: HashMap<Vec<u32>, usize>,
}

impl MultiIndexSet {
    pub fn new(parts: usize, max_degree: u32, capacity: u128) -> Result<Self> {
        let mut items = Vec::new();
        let mut running: u128 = 0;
        for degree in 0..=max_degree {
            let layer = compositions(parts, degree, capacity)?;
            running += layer.len() as u128;
            if running > capacity {
                return Err(Error::Capacity {
                    needed: running,
                    limit: capacity,
                });
            }
            items.extend(layer);
        }
        let pos = items
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), i))
            .collect();
        Ok(MultiIndexSet {
            parts,
            max_degree,
            items,
            pos,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.items[i]
    }

    pub fn index_of(&self, n: &[u32]) -> Option<usize> {
        self.pos.get(n).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u32>> {
        self.items.iter()
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.items[i].iter().sum()
    }
}

/// Multinomial probability `m(x, p) = C(N; x) ∏ pⱼ^{xⱼ}` as an exact rational.
pub fn multinomial_pmf(x: &[u32], p: &[BigRational]) -> BigRational {
    debug_assert_eq!(x.len(), p.len());
    let mut acc = big_to_rational(&multinomial(x));
    for (xi, pi) in x.iter().zip(p) {
        for _ in 0..*xi {
            acc *= pi;
        }
    }
    acc
}
