//! Orthogonal bases of functions on `d` categories and their positivity
//! structure.
//!
//! A basis here is a family `u⁽⁰⁾ ≡ 1, u⁽¹⁾, …, u⁽ᵈ⁻¹⁾` of functions on the
//! categories, orthogonal under a strictly positive probability vector `p`:
//! `Σⱼ u⁽ᵏ⁾ⱼ u⁽ˡ⁾ⱼ pⱼ = δₖₗ aₖ`. Constructors: the Helmert family (entries
//! are square roots, orthonormal), its unnormalized rational-entry scaling,
//! and character tables of finite groups. The associated orthogonal matrix
//! `H` with `hᵢⱼ = u⁽ⁱ⁻¹⁾ⱼ √pⱼ / √aᵢ₋₁` carries the hypergroup structure:
//! nonnegativity of `𝔰(j,k,l) = Σᵢ hᵢⱼ hᵢₖ hᵢₗ / hᵢd`.

use num::{BigRational, One, Signed, Zero};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strictly positive rational probability vector summing to one. Probability
/// data stays rational end to end; scalar backends convert on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    p: Vec<BigRational>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<BigRational>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::Probability("need at least two categories".into()));
        }
        if p.iter().any(|v| !v.is_positive()) {
            return Err(Error::Probability(
                "entries must be strictly positive".into(),
            ));
        }
        let total: BigRational = p.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::Probability(format!("entries sum to {total}, not 1")));
        }
        Ok(ProbabilityVector { p })
    }

    pub fn uniform(d: usize) -> Self {
        let v = vec![BigRational::new(1.into(), (d as i64).into()); d];
        ProbabilityVector { p: v }
    }

    pub fn d(&self) -> usize {
        self.p.len()
    }

    pub fn get(&self, j: usize) -> &BigRational {
        &self.p[j]
    }

    pub fn as_slice(&self) -> &[BigRational] {
        &self.p
    }

    pub fn to_scalars<S: Scalar>(&self) -> Vec<S> {
        self.p.iter().map(S::from_rational).collect()
    }

    /// Is `p` sorted in nonincreasing order?
    pub fn is_sorted_descending(&self) -> bool {
        self.p.windows(2).all(|w| w[0] >= w[1])
    }

    /// Strong monotonicity: every tail sum is dominated by the entry before
    /// it, `p_d + ⋯ + p_{i+1} ≤ p_i` for `1 ≤ i ≤ d-1` (non-strict).
    pub fn is_strongly_monotone(&self) -> bool {
        let mut tail = BigRational::zero();
        for i in (1..self.p.len()).rev() {
            tail += &self.p[i];
            if tail > self.p[i - 1] {
                return false;
            }
        }
        true
    }
}

/// The extreme points of the strongly monotone simplex: `d` vectors, the
/// `k`-th supported on the first `k` categories with entries
/// `(1/2, 1/4, …, 1/2^{k-1}, 1/2^{k-1}, 0, …, 0)`. Boundary zeros are
/// legitimate here (and only here); these are not valid construction inputs.
pub fn strongly_monotone_extremes(d: usize) -> Vec<Vec<BigRational>> {
    let mut out = Vec::with_capacity(d);
    for k in 1..=d {
        let mut v = vec![BigRational::zero(); d];
        for (i, slot) in v.iter_mut().enumerate().take(k) {
            let exp = if i + 1 < k { i as u32 + 1 } else { k as u32 - 1 };
            *slot = BigRational::new(1.into(), num::BigInt::from(2u64.pow(exp.max(0))));
        }
        if k == 1 {
            v[0] = BigRational::one();
        }
        out.push(v);
    }
    out
}

/// An orthogonal basis: `d` rows, row 0 identically one, with the squared
/// norms `aₖ = Σⱼ (u⁽ᵏ⁾ⱼ)² pⱼ` alongside.
#[derive(Clone, Debug)]
pub struct OrthoBasis<S> {
    rows: Vec<Vec<S>>,
    weights: Vec<S>,
}

impl<S: Scalar> OrthoBasis<S> {
    pub fn from_rows(rows: Vec<Vec<S>>, weights: Vec<S>) -> Self {
        OrthoBasis { rows, weights }
    }

    pub fn d(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, l: usize) -> &[S] {
        &self.rows[l]
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    /// The `d-1` nonconstant rows, the inputs to polynomial evaluation.
    pub fn nonconstant_rows(&self) -> &[Vec<S>] {
        &self.rows[1..]
    }

    pub fn weight(&self, l: usize) -> &S {
        &self.weights[l]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn is_orthonormal_within(&self, tol: f64) -> bool {
        self.weights
            .iter()
            .all(|a| (a.clone() - S::one()).is_zero_within(tol))
    }
}

/// Outcome of checking the orthogonality relations of a claimed basis.
#[derive(Clone, Debug)]
pub struct BasisReport {
    pub ok: bool,
    pub max_deviation: f64,
    pub detail: String,
}

/// Recompute every pairwise product `Σⱼ u⁽ᵏ⁾ u⁽ˡ⁾ pⱼ` and compare with
/// `δₖₗ aₖ`. Exact backends require exact equality; floats use `tol`.
pub fn validate_basis<S: Scalar>(
    p: &ProbabilityVector,
    basis: &OrthoBasis<S>,
    tol: f64,
) -> BasisReport {
    let d = p.d();
    let ps: Vec<S> = p.to_scalars();
    let mut max_dev: f64 = 0.0;
    let mut ok = true;
    let mut detail = String::new();
    if basis.d() != d {
        return BasisReport {
            ok: false,
            max_deviation: f64::INFINITY,
            detail: format!("basis has {} rows, expected {d}", basis.d()),
        };
    }
    for v in basis.row(0) {
        if !(v.clone() - S::one()).is_zero_within(tol) {
            ok = false;
            detail.push_str("row 0 is not identically one; ");
        }
    }
    for k in 0..d {
        for l in k..d {
            let mut acc = S::zero();
            for j in 0..d {
                acc = acc + basis.row(k)[j].mul_ref(&basis.row(l)[j]).mul_ref(&ps[j]);
            }
            let expect = if k == l {
                basis.weight(k).clone()
            } else {
                S::zero()
            };
            let dev = acc.clone() - expect;
            max_dev = max_dev.max(dev.abs_f64());
            if !dev.is_zero_within(tol) {
                ok = false;
            }
        }
        if !basis.weight(k).clone().is_zero_within(tol) {
            continue;
        }
        ok = false;
        detail.push_str(&format!("weight a_{k} is zero; "));
    }
    BasisReport {
        ok,
        max_deviation: max_dev,
        detail,
    }
}

/// The Helmert basis for `p`: orthonormal, supported on suffixes. Rows are
/// returned coarsest last: row `l` has `d-1-l` leading zeros, so row 1 is the
/// two-point contrast on the final categories and row `d-1` involves every
/// category. All weights are one.
pub fn helmert<S: Scalar>(p: &ProbabilityVector) -> Result<OrthoBasis<S>> {
    let d = p.d();
    // tail[i] = p_{i+1} + ... + p_d with 0-based i; tail[0] = 1
    let mut tail = vec![BigRational::zero(); d + 1];
    for i in (0..d).rev() {
        tail[i] = &tail[i + 1] + p.get(i);
    }
    let mut rows = vec![vec![S::one(); d]];
    // formula row i (1-based): zeros before i, then -sqrt(tail[i]/(p_i tail[i-1])),
    // then sqrt(p_i/(tail[i-1] tail[i])) on the suffix
    let mut formula_rows = Vec::new();
    for i in 1..d {
        let pi = p.get(i - 1);
        let diag = -S::sqrt_rational(&(&tail[i] / (pi * &tail[i - 1])))?;
        let off = S::sqrt_rational(&(pi / (&tail[i - 1] * &tail[i])))?;
        let mut row = vec![S::zero(); d];
        row[i - 1] = diag;
        for slot in row.iter_mut().take(d).skip(i) {
            *slot = off.clone();
        }
        formula_rows.push(row);
    }
    // display order: row l of the basis is formula row d-l
    for l in 1..d {
        rows.push(formula_rows[d - l - 1].clone());
    }
    let weights = vec![S::one(); d];
    Ok(OrthoBasis { rows, weights })
}

/// The unnormalized suffix-contrast basis with rational entries: row `j` is
/// zero before category `j`, takes the value `-(p_{j+1}+⋯+p_d)/p_j` at `j`,
/// and one after. Row `j` is proportional to the Helmert row supported on the
/// same suffix; the weights are `aⱼ = (1-|p_j|)(1-|p_{j-1}|)/p_j`.
pub fn xu<S: Scalar>(p: &ProbabilityVector) -> Result<OrthoBasis<S>> {
    let d = p.d();
    let mut rows = vec![vec![S::one(); d]];
    let mut weights = vec![S::one()];
    let mut head = BigRational::zero(); // |p_{j-1}| = p_1 + ... + p_{j-1}
    for j in 1..d {
        let pj = p.get(j - 1);
        let tail_after = BigRational::one() - &head - pj; // 1 - |p_j|
        let mut row = vec![S::zero(); d];
        row[j - 1] = S::from_rational(&(-&tail_after / pj));
        for slot in row.iter_mut().take(d).skip(j) {
            *slot = S::one();
        }
        rows.push(row);
        let a = &tail_after * (BigRational::one() - &head) / pj;
        weights.push(S::from_rational(&a));
        head += pj;
    }
    Ok(OrthoBasis { rows, weights })
}

/// Build a basis from a (real) character table. Rows are characters, columns
/// conjugacy classes; `sizes[j]` is the class size, so `p_j = sizes[j]/|G|`.
/// Row 0 must be the trivial character; the second orthogonality relation
/// then makes the rows orthonormal under `p`, which is verified exactly.
pub fn character_basis<S: Scalar>(
    table: &[Vec<BigRational>],
    sizes: &[u64],
) -> Result<(ProbabilityVector, OrthoBasis<S>)> {
    let d = table.len();
    if d == 0 || sizes.len() != d || table.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(
            "character table must be square with one size per class".into(),
        ));
    }
    let order: u64 = sizes.iter().sum();
    let p = ProbabilityVector::new(
        sizes
            .iter()
            .map(|&s| BigRational::new((s as i64).into(), (order as i64).into()))
            .collect(),
    )?;
    if table[0].iter().any(|v| !v.is_one()) {
        return Err(Error::Convention(
            "row 0 of a character table must be the trivial character".into(),
        ));
    }
    for k in 0..d {
        for l in k..d {
            let acc: BigRational = (0..d).map(|j| &table[k][j] * &table[l][j] * p.get(j)).sum();
            let expect = if k == l {
                BigRational::one()
            } else {
                BigRational::zero()
            };
            if acc != expect {
                return Err(Error::Invalid(format!(
                    "character rows {k},{l} are not orthonormal under class sizes: got {acc}"
                )));
            }
        }
    }
    let rows = table
        .iter()
        .map(|r| r.iter().map(S::from_rational).collect())
        .collect();
    let weights = vec![S::one(); d];
    Ok((p, OrthoBasis { rows, weights }))
}

fn int_table(rows: &[&[i64]]) -> Vec<Vec<BigRational>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| BigRational::from_integer(v.into())).collect())
        .collect()
}

/// Character table of the symmetric group on three letters. Classes ordered
/// transpositions, 3-cycles, identity (sizes 3, 2, 1), so `p = (1/2,1/3,1/6)`
/// and the identity class sits in the last column.
pub fn s3_table() -> (Vec<Vec<BigRational>>, Vec<u64>) {
    (
        int_table(&[&[1, 1, 1], &[0, -1, 2], &[-1, 1, 1]]),
        vec![3, 2, 1],
    )
}

/// The 4x4 Hadamard-type character table of the Klein group, in the column
/// order that puts the identity class second. The hypergroup property is
/// insensitive to the column order for abelian groups.
pub fn hadamard4_table() -> (Vec<Vec<BigRational>>, Vec<u64>) {
    (
        int_table(&[
            &[1, 1, 1, 1],
            &[-1, 1, -1, 1],
            &[1, 1, -1, -1],
            &[-1, 1, 1, -1],
        ]),
        vec![1, 1, 1, 1],
    )
}

/// Character table of `C₂ⁿ` in Sylvester order: rows and columns indexed by
/// bit strings counting up from zero, entry `(-1)^{x·y}`. The identity class
/// is the first column.
pub fn c2n_table(n: u32) -> (Vec<Vec<BigRational>>, Vec<u64>) {
    let d = 1usize << n;
    let mut rows = Vec::with_capacity(d);
    for x in 0..d {
        let mut row = Vec::with_capacity(d);
        for y in 0..d {
            let parity = (x & y).count_ones() % 2;
            row.push(if parity == 0 {
                BigRational::one()
            } else {
                -BigRational::one()
            });
        }
        rows.push(row);
    }
    (rows, vec![1; d])
}

/// The orthogonal matrix attached to a basis: `hᵢⱼ = u⁽ⁱ⁻¹⁾ⱼ √pⱼ / √aᵢ₋₁`
/// (rows indexed from 1 in the usual notation). Row 0 is `(√p₁, …, √p_d)`.
#[derive(Clone, Debug)]
pub struct HMatrix<S> {
    h: Vec<Vec<S>>,
}

impl<S: Scalar> HMatrix<S> {
    pub fn d(&self) -> usize {
        self.h.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &S {
        &self.h[i][j]
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.h
    }

    pub fn from_rows(h: Vec<Vec<S>>) -> Self {
        HMatrix { h }
    }

    /// Transpose, for the duality checks.
    pub fn transpose(&self) -> HMatrix<S> {
        let d = self.d();
        let h = (0..d)
            .map(|i| (0..d).map(|j| self.h[j][i].clone()).collect())
            .collect();
        HMatrix { h }
    }

    /// Maximum deviation of `H Hᵀ` from the identity, as f64.
    pub fn orthogonality_deviation(&self) -> f64 {
        let d = self.d();
        let mut max_dev: f64 = 0.0;
        for i in 0..d {
            for k in 0..d {
                let mut acc = S::zero();
                for j in 0..d {
                    acc = acc + self.h[i][j].mul_ref(&self.h[k][j]);
                }
                if i == k {
                    acc = acc - S::one();
                }
                max_dev = max_dev.max(acc.abs_f64());
            }
        }
        max_dev
    }
}

pub fn h_matrix<S: Scalar>(p: &ProbabilityVector, basis: &OrthoBasis<S>) -> Result<HMatrix<S>> {
    let d = p.d();
    let sqrt_p: Vec<S> = p
        .as_slice()
        .iter()
        .map(S::sqrt_rational)
        .collect::<Result<_>>()?;
    let mut h = Vec::with_capacity(d);
    for i in 0..d {
        let norm = basis.weight(i).sqrt()?;
        let inv_norm = norm.invert()?;
        let row = (0..d)
            .map(|j| basis.row(i)[j].mul_ref(&sqrt_p[j]).mul_ref(&inv_norm))
            .collect();
        h.push(row);
    }
    Ok(HMatrix { h })
}

/// Result of a positivity sweep: the minimum value seen, where it happened
/// (1-based indices), and whether everything stayed nonnegative. On exact
/// backends "nonnegative" is decided exactly; floats allow `-tol`.
#[derive(Clone, Debug)]
pub struct PositivityReport {
    pub holds: bool,
    pub checked: usize,
    pub min_value: f64,
    pub min_display: String,
    pub witness: (usize, usize, usize),
}

impl PositivityReport {
    pub(crate) fn collect<S: Scalar>(values: Vec<((usize, usize, usize), S)>, tol: f64) -> Self {
        let mut holds = true;
        let mut min_value = f64::INFINITY;
        let mut min_display = String::new();
        let mut witness = (0, 0, 0);
        let checked = values.len();
        for (ix, v) in values {
            if !v.is_nonneg_within(tol) {
                holds = false;
            }
            let approx = v.to_f64();
            if approx < min_value {
                min_value = approx;
                min_display = v.to_string();
                witness = ix;
            }
        }
        PositivityReport {
            holds,
            checked,
            min_value,
            min_display,
            witness,
        }
    }
}

/// The hypergroup check on `H`: `𝔰(j,k,l) = Σᵢ hᵢⱼ hᵢₖ hᵢₗ / hᵢd ≥ 0` over
/// all unordered state triples, with the last state distinguished. Errors if
/// the last column has a zero entry.
pub fn hypergroup_check<S: Scalar>(h: &HMatrix<S>, tol: f64) -> Result<PositivityReport> {
    hypergroup_check_at(h, h.d(), tol)
}

/// [`hypergroup_check`] with an arbitrary distinguished state `i0` (1-based):
/// the sums divide by column `i0` instead of the last column.
pub fn hypergroup_check_at<S: Scalar>(
    h: &HMatrix<S>,
    i0: usize,
    tol: f64,
) -> Result<PositivityReport> {
    let d = h.d();
    if i0 == 0 || i0 > d {
        return Err(Error::Dimension(format!(
            "distinguished state {i0} is out of range for {d} states"
        )));
    }
    let mut inv_last = Vec::with_capacity(d);
    for i in 0..d {
        let v = h.entry(i, i0 - 1);
        if v.is_zero() || v.abs_f64() == 0.0 {
            return Err(Error::Precondition(format!(
                "H has a zero in column {} (row {}), the hypergroup sum is undefined",
                i0,
                i + 1
            )));
        }
        inv_last.push(v.invert()?);
    }
    let mut values = Vec::new();
    for j in 0..d {
        for k in j..d {
            for l in k..d {
                let mut acc = S::zero();
                for i in 0..d {
                    let prod = h
                        .entry(i, j)
                        .mul_ref(h.entry(i, k))
                        .mul_ref(h.entry(i, l))
                        .mul_ref(&inv_last[i]);
                    acc = acc + prod;
                }
                values.push(((j + 1, k + 1, l + 1), acc));
            }
        }
    }
    Ok(PositivityReport::collect(values, tol))
}

/// Triple products of basis rows: `c(i,l,k) = Σⱼ u⁽ⁱ⁾ u⁽ˡ⁾ u⁽ᵏ⁾ pⱼ`,
/// symmetric in all three indices; `c(0,l,k) = δₗₖ aₗ`.
pub fn triple_products<S: Scalar>(p: &ProbabilityVector, basis: &OrthoBasis<S>) -> Vec<Vec<Vec<S>>> {
    let d = p.d();
    let ps: Vec<S> = p.to_scalars();
    let mut c = vec![vec![vec![S::zero(); d]; d]; d];
    for i in 0..d {
        for l in i..d {
            for k in l..d {
                let mut acc = S::zero();
                for j in 0..d {
                    let prod = basis.row(i)[j]
                        .mul_ref(&basis.row(l)[j])
                        .mul_ref(&basis.row(k)[j])
                        .mul_ref(&ps[j]);
                    acc = acc + prod;
                }
                for perm in [
                    (i, l, k),
                    (i, k, l),
                    (l, i, k),
                    (l, k, i),
                    (k, i, l),
                    (k, l, i),
                ] {
                    c[perm.0][perm.1][perm.2] = acc.clone();
                }
            }
        }
    }
    c
}

/// The triple-sum positivity check on basis rows:
/// `Σⱼ u⁽ˡ⁾ u⁽ᵐ⁾ u⁽ʳ⁾ pⱼ ≥ 0` for all `0 ≤ l ≤ m ≤ r ≤ d-1`.
pub fn gks_check<S: Scalar>(
    p: &ProbabilityVector,
    basis: &OrthoBasis<S>,
    tol: f64,
) -> PositivityReport {
    let c = triple_products(p, basis);
    let d = p.d();
    let mut values = Vec::new();
    for l in 0..d {
        for m in l..d {
            for r in m..d {
                values.push(((l, m, r), c[l][m][r].clone()));
            }
        }
    }
    PositivityReport::collect(values, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Exact;
    use crate::scalar::big_rational;

    fn pv(entries: &[(i64, i64)]) -> ProbabilityVector {
        ProbabilityVector::new(entries.iter().map(|&(n, d)| big_rational(n, d)).collect()).unwrap()
    }

    fn exact_int(n: i64) -> Exact {
        Exact::integer(n)
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![big_rational(1, 2), big_rational(1, 3)]).is_err());
        assert!(ProbabilityVector::new(vec![big_rational(1, 2), big_rational(1, 2)]).is_ok());
        assert!(
            ProbabilityVector::new(vec![big_rational(3, 2), big_rational(-1, 2)]).is_err(),
            "negative entries must be rejected"
        );
    }

    #[test]
    fn helmert_two_point() {
        let p = pv(&[(1, 2), (1, 2)]);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        assert_eq!(b.row(1), &[exact_int(-1), exact_int(1)]);
    }

    #[test]
    fn helmert_three_point_rows() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        assert_eq!(b.row(1), &[exact_int(0), exact_int(-1), exact_int(2)]);
        assert_eq!(b.row(2), &[exact_int(-1), exact_int(1), exact_int(1)]);
        let report = validate_basis(&p, &b, 0.0);
        assert!(report.ok, "{}", report.detail);
        assert!(b.is_orthonormal_within(0.0));
    }

    #[test]
    fn helmert_orthonormal_for_irrational_entries() {
        // uniform d=3 has genuinely irrational Helmert entries
        let p = ProbabilityVector::uniform(3);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let report = validate_basis(&p, &b, 0.0);
        assert!(report.ok, "{}", report.detail);
        assert_eq!(report.max_deviation, 0.0);
        // and the float backend agrees to tolerance
        let bf: OrthoBasis<f64> = helmert(&p).unwrap();
        let rf = validate_basis(&p, &bf, 1e-12);
        assert!(rf.ok);
    }

    #[test]
    fn xu_rows_and_weights() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = xu(&p).unwrap();
        assert_eq!(b.row(1), &[exact_int(-1), exact_int(1), exact_int(1)]);
        assert_eq!(b.weight(1), &exact_int(1));
        let report = validate_basis(&p, &b, 0.0);
        assert!(report.ok, "{}", report.detail);
        // closed form for the weights
        let a2 = b.weight(2).rational_value().unwrap();
        // a_2 = (1-|p_2|)(1-|p_1|)/p_2 = (1/6)(1/2)/(1/3) = 1/4
        assert_eq!(a2, big_rational(1, 4));
    }

    #[test]
    fn xu_rows_are_scaled_helmert_rows() {
        let p = pv(&[(1, 2), (1, 4), (1, 8), (1, 8)]);
        let hb: OrthoBasis<Exact> = helmert(&p).unwrap();
        let xb: OrthoBasis<Exact> = xu(&p).unwrap();
        let d = p.d();
        // xu row j is supported on the suffix from j; the matching Helmert
        // display row is d-j. Proportionality with a positive scale.
        for j in 1..d {
            let hrow = hb.row(d - j);
            let xrow = xb.row(j);
            let scale = xrow[d - 1].clone().div(&hrow[d - 1]).unwrap();
            for t in 0..d {
                assert_eq!(xrow[t].clone(), hrow[t].mul_ref(&scale));
            }
            assert!(scale.is_nonneg_within(0.0));
        }
    }

    #[test]
    fn character_s3_matches_display() {
        let (table, sizes) = s3_table();
        let (p, b): (_, OrthoBasis<Exact>) = character_basis(&table, &sizes).unwrap();
        assert_eq!(
            p.as_slice(),
            &[big_rational(1, 2), big_rational(1, 3), big_rational(1, 6)]
        );
        let h = h_matrix(&p, &b).unwrap();
        // row 0 = sqrt(p); row 1 = (0, -sqrt(1/3), 2 sqrt(1/6))
        let sqrt = |n: i64, d: i64| Exact::sqrt_of(&big_rational(n, d)).unwrap();
        assert_eq!(h.entry(0, 0), &sqrt(1, 2));
        assert_eq!(h.entry(1, 0), &Exact::integer(0));
        assert_eq!(h.entry(1, 1), &(-sqrt(1, 3)));
        assert_eq!(h.entry(1, 2), &(Exact::integer(2) * sqrt(1, 6)));
        assert_eq!(h.entry(2, 0), &(-sqrt(1, 2)));
        assert_eq!(h.orthogonality_deviation(), 0.0);
    }

    #[test]
    fn character_rejects_non_orthogonal() {
        let table = int_table(&[&[1, 1], &[1, 1]]);
        assert!(character_basis::<Exact>(&table, &[1, 1]).is_err());
    }

    #[test]
    fn hadamard4_is_half_sign_matrix() {
        let (table, sizes) = hadamard4_table();
        let (p, b): (_, OrthoBasis<Exact>) = character_basis(&table, &sizes).unwrap();
        let h = h_matrix(&p, &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let doubled = h.entry(i, j).clone() + h.entry(i, j).clone();
                let sign = doubled.rational_value().unwrap();
                assert!(sign == big_rational(1, 1) || sign == big_rational(-1, 1));
            }
        }
        let rep = hypergroup_check(&h, 0.0).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn c2n_tables_are_characters() {
        for n in 1..=3u32 {
            let (table, sizes) = c2n_table(n);
            let (p, b): (_, OrthoBasis<Exact>) = character_basis(&table, &sizes).unwrap();
            let h = h_matrix(&p, &b).unwrap();
            assert_eq!(h.orthogonality_deviation(), 0.0);
            let rep = hypergroup_check(&h, 0.0).unwrap();
            assert!(rep.holds, "C2^{n} hypergroup failed: {}", rep.min_display);
        }
    }

    #[test]
    fn strong_monotonicity_examples() {
        assert!(pv(&[(1, 2), (1, 3), (1, 6)]).is_strongly_monotone());
        assert!(!pv(&[(2, 5), (7, 20), (1, 4)]).is_strongly_monotone());
        assert!(pv(&[(1, 2), (1, 2)]).is_strongly_monotone());
        assert!(!ProbabilityVector::uniform(3).is_strongly_monotone());
    }

    #[test]
    fn extreme_points_d3() {
        let ex = strongly_monotone_extremes(3);
        assert_eq!(
            ex,
            vec![
                vec![big_rational(1, 1), big_rational(0, 1), big_rational(0, 1)],
                vec![big_rational(1, 2), big_rational(1, 2), big_rational(0, 1)],
                vec![big_rational(1, 2), big_rational(1, 4), big_rational(1, 4)],
            ]
        );
        // every extreme point satisfies the tail-domination inequalities
        for v in &ex {
            let mut tail = BigRational::zero();
            for i in (1..v.len()).rev() {
                tail += &v[i];
                assert!(tail <= v[i - 1]);
            }
        }
    }

    #[test]
    fn extremes_decompose_strongly_monotone_points() {
        // the extreme matrix is triangular by support, so solve for the
        // convex weights directly and check they are a distribution
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let ex = strongly_monotone_extremes(3);
        // back-substitute from the last coordinate
        let mut lambda = vec![BigRational::zero(); 3];
        let mut residual: Vec<BigRational> = p.as_slice().to_vec();
        for k in (0..3).rev() {
            let pivot = &ex[k][k];
            let coef = &residual[k] / pivot;
            for j in 0..3 {
                let adj = &coef * &ex[k][j];
                residual[j] -= adj;
            }
            lambda[k] = coef;
        }
        assert!(residual.iter().all(|v| v.is_zero()));
        assert!(lambda.iter().all(|v| !v.is_negative()));
        let total: BigRational = lambda.iter().cloned().sum();
        assert!(total.is_one());
    }

    #[test]
    fn hypergroup_helmert_witness() {
        let p = pv(&[(2, 5), (7, 20), (1, 4)]);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let h = h_matrix(&p, &b).unwrap();
        let rep = hypergroup_check(&h, 0.0).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.witness, (1, 1, 1));
        assert!((rep.min_value - (-0.6325)).abs() < 1e-3, "{}", rep.min_value);
    }

    #[test]
    fn hypergroup_last_state_triples_are_trivial() {
        // s(j,k,d) = δ_jk and s(d,d,d) = 1 for any orthogonal H
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let h = h_matrix(&p, &b).unwrap();
        let d = 3;
        for j in 0..d {
            let mut acc = Exact::integer(0);
            for i in 0..d {
                let v = h
                    .entry(i, j)
                    .mul_ref(h.entry(i, j))
                    .mul_ref(h.entry(i, d - 1))
                    .mul_ref(&h.entry(i, d - 1).invert().unwrap());
                acc = acc + v;
            }
            assert_eq!(acc, Exact::integer(1));
        }
    }

    #[test]
    fn gks_check_matches_strong_monotonicity() {
        for (entries, expect) in [
            (vec![(1i64, 2i64), (1, 3), (1, 6)], true),
            (vec![(2, 5), (7, 20), (1, 4)], false),
            (vec![(1, 2), (1, 4), (1, 8), (1, 8)], true),
            (vec![(1, 4), (1, 4), (1, 4), (1, 4)], false),
        ] {
            let p = pv(&entries);
            let b: OrthoBasis<Exact> = helmert(&p).unwrap();
            let rep = gks_check(&p, &b, 0.0);
            assert_eq!(rep.holds, expect, "p = {entries:?}");
            assert_eq!(rep.holds, p.is_strongly_monotone());
            if !rep.holds {
                let (l, m, r) = rep.witness;
                assert!(l == m && m == r, "violation should be diagonal");
            }
        }
    }

    #[test]
    fn triple_products_reduce_to_orthogonality() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = xu(&p).unwrap();
        let c = triple_products(&p, &b);
        for l in 0..3 {
            for k in 0..3 {
                let expect = if l == k {
                    b.weight(l).clone()
                } else {
                    Exact::integer(0)
                };
                assert_eq!(c[0][l][k], expect);
            }
        }
    }
}
