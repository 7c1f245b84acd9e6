//! The polynomial family attached to an orthogonal basis, with three
//! independent evaluators, tabulation over all states, norms, the scaled and
//! dual systems, and the generating-function transform identity.
//!
//! For counts `x` over `d` categories with `|x| = N` and a basis
//! `u⁽¹⁾, …, u⁽ᵈ⁻¹⁾`, the polynomial `Q_n(x)` is the coefficient of
//! `w₁ⁿ¹ ⋯ w_{d-1}^{n_{d-1}}` in `∏ⱼ (1 + Σₗ wₗ u⁽ˡ⁾ⱼ)^{xⱼ}`. The three
//! evaluators (coefficient extraction, symmetrized sum, terminating
//! hypergeometric series) compute the same object along different routes and
//! exist to check one another.

use num::{BigRational, One, Zero};

use crate::basis::{HMatrix, OrthoBasis, ProbabilityVector};
use crate::comb::{
    big_to_rational, binomial, extended, factorial, multinomial, multinomial_pmf, rising_int,
    CompositionSpace, MultiIndexSet,
};
use crate::error::{Error, Result};
use crate::scalar::{pow_u32, Scalar};

/// All coefficients of `∏ⱼ (1 + Σₗ wₗ u⁽ˡ⁾ⱼ)^{xⱼ}` up to total degree
/// `max_degree`, in the graded order of [`MultiIndexSet`]. One call yields
/// `Q_n(x)` for every `n` at once.
pub fn gf_column<S: Scalar>(
    basis: &OrthoBasis<S>,
    x: &[u32],
    max_degree: u32,
    capacity: u128,
) -> Result<(MultiIndexSet, Vec<S>)> {
    let d = basis.d();
    if x.len() != d {
        return Err(Error::Dimension(format!(
            "state has {} coordinates, basis has {d}",
            x.len()
        )));
    }
    let vars = d - 1;
    let set = MultiIndexSet::new(vars, max_degree, capacity)?;
    let mut coeffs = vec![S::zero(); set.len()];
    coeffs[0] = S::one();
    let mut shifted = vec![0usize; vars];
    for (j, &count) in x.iter().enumerate() {
        for _ in 0..count {
            // multiply in place by 1 + Σ_l u_j^(l) w_l, high degree first so
            // the lower-degree reads are still pre-update values
            for idx in (1..set.len()).rev() {
                let m = set.get(idx);
                let mut touched = 0;
                for (l, s) in shifted.iter_mut().enumerate() {
                    if m[l] > 0 {
                        let mut prev = m.to_vec();
                        prev[l] -= 1;
                        *s = set.index_of(&prev).expect("interior index");
                        touched = l + 1;
                    } else {
                        *s = usize::MAX;
                    }
                }
                let mut acc = coeffs[idx].clone();
                for l in 0..touched {
                    if shifted[l] != usize::MAX {
                        acc = acc + basis.row(l + 1)[j].mul_ref(&coeffs[shifted[l]]);
                    }
                }
                coeffs[idx] = acc;
            }
        }
    }
    Ok((set, coeffs))
}

/// `Q_n(x)` by coefficient extraction from the generating function.
pub fn eval_q_gf<S: Scalar>(
    basis: &OrthoBasis<S>,
    x: &[u32],
    n: &[u32],
    capacity: u128,
) -> Result<S> {
    let degree: u32 = n.iter().sum();
    let (set, coeffs) = gf_column(basis, x, degree, capacity)?;
    let idx = set
        .index_of(n)
        .ok_or_else(|| Error::Dimension(format!("index {n:?} not in range")))?;
    Ok(coeffs[idx].clone())
}

/// `Q_n(x)` as the symmetrized sum over type assignments: expand `x` into a
/// word of `N` category labels, assign type `l` to exactly `n_l` positions
/// (the rest type 0), and sum `∏ u⁽ˡ⁾` over all assignments.
pub fn eval_q_symmetrized<S: Scalar>(basis: &OrthoBasis<S>, x: &[u32], n: &[u32]) -> Result<S> {
    let d = basis.d();
    if x.len() != d || n.len() != d - 1 {
        return Err(Error::Dimension(
            "state or index length does not match basis".into(),
        ));
    }
    let mut word = Vec::new();
    for (j, &count) in x.iter().enumerate() {
        word.extend(std::iter::repeat(j).take(count as usize));
    }
    let total: u32 = n.iter().sum();
    if total > word.len() as u32 {
        return Ok(S::zero());
    }
    fn go<S: Scalar>(
        basis: &OrthoBasis<S>,
        word: &[usize],
        pos: usize,
        remaining: &mut [u32],
        left: u32,
    ) -> S {
        if left == 0 {
            return S::one();
        }
        if (word.len() - pos) < left as usize {
            return S::zero();
        }
        let mut acc = go(basis, word, pos + 1, remaining, left);
        for l in 0..remaining.len() {
            if remaining[l] > 0 {
                remaining[l] -= 1;
                let sub = go(basis, word, pos + 1, remaining, left - 1);
                remaining[l] += 1;
                acc = acc + basis.row(l + 1)[word[pos]].mul_ref(&sub);
            }
        }
        acc
    }
    let mut remaining = n.to_vec();
    Ok(go(basis, &word, 0, &mut remaining, total))
}

/// `Q_n(x)` through the terminating hypergeometric series. The basis is
/// first rescaled so its last column is identically one (requires nonzero
/// last entries); the series then runs over nonnegative integer matrices
/// with bounded row and column sums, and the result is scaled back.
pub fn eval_q_hypergeometric<S: Scalar>(basis: &OrthoBasis<S>, x: &[u32], n: &[u32]) -> Result<S> {
    let d = basis.d();
    if x.len() != d || n.len() != d - 1 {
        return Err(Error::Dimension(
            "state or index length does not match basis".into(),
        ));
    }
    let n_balls: u32 = x.iter().sum();
    if n.iter().sum::<u32>() > n_balls {
        return Ok(S::zero());
    }
    let vars = d - 1;
    let mut b = Vec::with_capacity(vars);
    for l in 1..d {
        let v = basis.row(l)[d - 1].clone();
        if v.is_zero() || v.abs_f64() == 0.0 {
            return Err(Error::Precondition(format!(
                "basis row {l} vanishes on the last category; the series form needs u_d ≠ 0"
            )));
        }
        b.push(v);
    }
    // z[i][j] = 1 - u_j^{(i+1)} / b_i for the first d-1 categories
    let mut z = vec![vec![S::zero(); vars]; vars];
    for i in 0..vars {
        let inv = b[i].invert()?;
        for j in 0..vars {
            z[i][j] = S::one() - basis.row(i + 1)[j].mul_ref(&inv);
        }
    }

    struct Ctx<'a, S> {
        z: &'a [Vec<S>],
        x: &'a [u32],
        n: &'a [u32],
        vars: usize,
        n_balls: u32,
    }
    // enumerate matrices k cell by cell in row-major order, tracking row
    // remainder and column usage; accumulate Σ over k of
    //   Π_i (-n_i)_{k_i·} Π_j (-x_j)_{k_·j} / ((-N)_{k··} Π k_ij!) Π z^k_ij
    fn go<S: Scalar>(
        ctx: &Ctx<'_, S>,
        cell: usize,
        row_used: u32,
        col_used: &mut [u32],
        total: u32,
        weight: &S,
        inv_fact: &BigRational,
    ) -> S {
        if cell == ctx.vars * ctx.vars {
            let coef = inv_fact / &rising_int(-(ctx.n_balls as i64), total);
            return S::from_rational(&coef).mul_ref(weight);
        }
        let i = cell / ctx.vars;
        let j = cell % ctx.vars;
        let row_cap = ctx.n[i];
        let mut acc = S::zero();
        let max_here = (row_cap - row_used).min(ctx.x[j].saturating_sub(col_used[j]));
        let mut w = weight.clone();
        let mut f = inv_fact.clone();
        for k in 0..=max_here {
            if k > 0 {
                w = w.mul_ref(&ctx.z[i][j]);
                f /= BigRational::from_integer((k as i64).into());
                // pochhammer factors (-n_i) and (-x_j) advance one step
                f *= BigRational::from_integer(
                    ((-(ctx.n[i] as i64)) + (row_used + k - 1) as i64).into(),
                );
                f *= BigRational::from_integer(
                    ((-(ctx.x[j] as i64)) + (col_used[j] + k - 1) as i64).into(),
                );
            }
            col_used[j] += k;
            let next_row_used = if j + 1 == ctx.vars { 0 } else { row_used + k };
            acc = acc + go(ctx, cell + 1, next_row_used, col_used, total + k, &w, &f);
            col_used[j] -= k;
        }
        acc
    }

    let ctx = Ctx {
        z: &z,
        x,
        n,
        vars,
        n_balls,
    };
    let mut col_used = vec![0u32; vars];
    let series = go(
        &ctx,
        0,
        0,
        &mut col_used,
        0,
        &S::one(),
        &BigRational::one(),
    );
    let constant = big_to_rational(&multinomial(&extended(n, n_balls)));
    let mut out = S::from_rational(&constant).mul_ref(&series);
    for (i, bi) in b.iter().enumerate() {
        out = out.mul_ref(&pow_u32(bi, n[i]));
    }
    Ok(out)
}

/// The conditional-binomial product polynomial `K_n(x; p, N)`: a product of
/// `d-1` univariate terminating series in a degenerate-safe paired form,
/// rational for rational `p`.
pub fn eval_xu_k(
    p: &ProbabilityVector,
    x: &[u32],
    n: &[u32],
    n_balls: u32,
) -> Result<BigRational> {
    let d = p.d();
    if x.len() != d || n.len() != d - 1 {
        return Err(Error::Dimension(
            "state or index length does not match p".into(),
        ));
    }
    if x.iter().sum::<u32>() != n_balls {
        return Err(Error::Dimension("|x| must equal N".into()));
    }
    let total: u32 = n.iter().sum();
    if total > n_balls {
        return Err(Error::Dimension("|n| must be at most N".into()));
    }
    let mut out = rising_int(-(n_balls as i64), total);
    if out.is_zero() {
        return Err(Error::Division("(-N)_{|n|} vanished".into()));
    }
    out = BigRational::one() / out;
    if total % 2 == 1 {
        out = -out;
    }
    let mut head = BigRational::zero(); // p_1 + ... + p_{j-1}
    let mut x_head: u32 = 0; // x_1 + ... + x_{j-1}
    let mut n_tail: u32 = total; // n_j + ... + n_{d-1}
    for j in 0..(d - 1) {
        n_tail -= n[j];
        let pj = p.get(j);
        let rest = BigRational::one() - &head; // 1 - |p_{j-1}|
        let z = &rest / pj;
        let tilde = n_balls as i64 - x_head as i64 - n_tail as i64;
        let mut f = BigRational::zero();
        for k in 0..=n[j] {
            let mut term = rising_int(-(n[j] as i64), k) * rising_int(-(x[j] as i64), k);
            term /= big_to_rational(&factorial(k));
            term *= num::pow::pow(z.clone(), k as usize);
            term *= rising_int(-tilde + k as i64, n[j] - k);
            f += term;
        }
        out *= num::pow::pow(pj / &rest, n[j] as usize) * f;
        head += pj;
        x_head += x[j];
    }
    Ok(out)
}

/// Squared norm `E[Q_n²] = C(N; n⁺) ∏ aₗ^{nₗ}` under the multinomial law.
pub fn norm_q<S: Scalar>(basis: &OrthoBasis<S>, n_balls: u32, n: &[u32]) -> S {
    let c = big_to_rational(&multinomial(&extended(n, n_balls)));
    let mut out = S::from_rational(&c);
    for (l, &k) in n.iter().enumerate() {
        out = out.mul_ref(&pow_u32(basis.weight(l + 1), k));
    }
    out
}

/// Value at the pure last-category state: `Q_n(N e_d) = C(N; n⁺) ∏ bₗ^{nₗ}`
/// with `bₗ` the last entry of row `l`.
pub fn q_at_ned<S: Scalar>(basis: &OrthoBasis<S>, n_balls: u32, n: &[u32]) -> S {
    let d = basis.d();
    let c = big_to_rational(&multinomial(&extended(n, n_balls)));
    let mut out = S::from_rational(&c);
    for (l, &k) in n.iter().enumerate() {
        out = out.mul_ref(&pow_u32(&basis.row(l + 1)[d - 1], k));
    }
    out
}

/// Normalizer of the scaled system: `h⋄_n = C(N; n⁺) ∏ bₗ^{2nₗ}`. For an
/// orthonormal basis `E[(Q_n/Q_n(Ne_d))²] = 1/h⋄_n`.
pub fn h_diamond<S: Scalar>(basis: &OrthoBasis<S>, n_balls: u32, n: &[u32]) -> S {
    let d = basis.d();
    let c = big_to_rational(&multinomial(&extended(n, n_balls)));
    let mut out = S::from_rational(&c);
    for (l, &k) in n.iter().enumerate() {
        out = out.mul_ref(&pow_u32(&basis.row(l + 1)[d - 1], 2 * k));
    }
    out
}

/// Every polynomial value on every state: rows are multi-indices in graded
/// order, columns are states in the composition order, together with the
/// stationary law and the squared norms.
#[derive(Clone, Debug)]
pub struct PolynomialTable<S> {
    p: ProbabilityVector,
    basis: OrthoBasis<S>,
    n_balls: u32,
    indices: MultiIndexSet,
    states: CompositionSpace,
    values: Vec<Vec<S>>,
    norms: Vec<S>,
    pmf: Vec<BigRational>,
}

pub fn build_table<S: Scalar>(
    p: &ProbabilityVector,
    basis: &OrthoBasis<S>,
    n_balls: u32,
    capacity: u128,
) -> Result<PolynomialTable<S>> {
    let d = p.d();
    if basis.d() != d {
        return Err(Error::Dimension("basis and p disagree on d".into()));
    }
    let states = CompositionSpace::new(d, n_balls, capacity)?;
    let indices = MultiIndexSet::new(d - 1, n_balls, capacity)?;
    let cells = states.len() as u128 * indices.len() as u128;
    if cells > capacity {
        return Err(Error::Capacity {
            needed: cells,
            limit: capacity,
        });
    }
    let mut values = vec![vec![S::zero(); states.len()]; indices.len()];
    for (c, x) in states.iter().enumerate() {
        let (set, coeffs) = gf_column(basis, x, n_balls, capacity)?;
        debug_assert_eq!(set.len(), indices.len());
        for (r, v) in coeffs.into_iter().enumerate() {
            values[r][c] = v;
        }
    }
    let norms = (0..indices.len())
        .map(|r| norm_q(basis, n_balls, indices.get(r)))
        .collect();
    let pmf = states
        .iter()
        .map(|x| multinomial_pmf(x, p.as_slice()))
        .collect();
    Ok(PolynomialTable {
        p: p.clone(),
        basis: basis.clone(),
        n_balls,
        indices,
        states,
        values,
        norms,
        pmf,
    })
}

/// Worst deviation of the table from exact pairwise orthogonality.
#[derive(Clone, Debug)]
pub struct OrthogonalityReport {
    pub ok: bool,
    pub max_deviation: f64,
    pub worst_pair: (Vec<u32>, Vec<u32>),
    pub pairs_checked: usize,
}

impl<S: Scalar> PolynomialTable<S> {
    pub fn d(&self) -> usize {
        self.p.d()
    }

    pub fn n_balls(&self) -> u32 {
        self.n_balls
    }

    pub fn p(&self) -> &ProbabilityVector {
        &self.p
    }

    pub fn basis(&self) -> &OrthoBasis<S> {
        &self.basis
    }

    pub fn indices(&self) -> &MultiIndexSet {
        &self.indices
    }

    pub fn states(&self) -> &CompositionSpace {
        &self.states
    }

    pub fn value(&self, n_idx: usize, x_idx: usize) -> &S {
        &self.values[n_idx][x_idx]
    }

    pub fn row(&self, n_idx: usize) -> &[S] {
        &self.values[n_idx]
    }

    pub fn norm(&self, n_idx: usize) -> &S {
        &self.norms[n_idx]
    }

    pub fn pmf(&self, x_idx: usize) -> &BigRational {
        &self.pmf[x_idx]
    }

    /// `Σ_x m(x) Q_m(x) Q_n(x)` straight off the table.
    pub fn gram(&self, m_idx: usize, n_idx: usize) -> S {
        let mut acc = S::zero();
        for c in 0..self.states.len() {
            let w = S::from_rational(&self.pmf[c]);
            acc = acc + self.values[m_idx][c]
                .mul_ref(&self.values[n_idx][c])
                .mul_ref(&w);
        }
        acc
    }

    pub fn orthogonality_report(&self, tol: f64) -> OrthogonalityReport {
        let rows = self.indices.len();
        let mut ok = true;
        let mut max_dev: f64 = 0.0;
        let mut worst = (self.indices.get(0).to_vec(), self.indices.get(0).to_vec());
        let mut pairs = 0;
        for a in 0..rows {
            for b in a..rows {
                pairs += 1;
                let mut dev = self.gram(a, b);
                if a == b {
                    dev = dev - self.norms[a].clone();
                }
                if !dev.is_zero_within(tol) {
                    ok = false;
                }
                let mag = dev.abs_f64();
                if mag > max_dev {
                    max_dev = mag;
                    worst = (self.indices.get(a).to_vec(), self.indices.get(b).to_vec());
                }
            }
        }
        OrthogonalityReport {
            ok,
            max_deviation: max_dev,
            worst_pair: worst,
            pairs_checked: pairs,
        }
    }

    /// The scaled system `Q_n / Q_n(N e_d)`, row by row. Errors if any
    /// `Q_n(N e_d)` vanishes.
    pub fn scaled_values(&self) -> Result<Vec<Vec<S>>> {
        let mut out = Vec::with_capacity(self.indices.len());
        for r in 0..self.indices.len() {
            let denom = q_at_ned(&self.basis, self.n_balls, self.indices.get(r));
            let inv = denom.invert().map_err(|_| {
                Error::Precondition(format!(
                    "Q_n(N e_d) = 0 for n = {:?}; the scaled system needs nonzero last-column basis entries",
                    self.indices.get(r)
                ))
            })?;
            out.push(self.values[r].iter().map(|v| v.mul_ref(&inv)).collect());
        }
        Ok(out)
    }

    /// Orthonormalized rows `Q_n / sqrt(E[Q_n²])`.
    pub fn normalized_values(&self) -> Result<Vec<Vec<S>>> {
        let mut out = Vec::with_capacity(self.indices.len());
        for r in 0..self.indices.len() {
            let inv = self.norms[r].sqrt()?.invert()?;
            out.push(self.values[r].iter().map(|v| v.mul_ref(&inv)).collect());
        }
        Ok(out)
    }
}

/// The self-dual table `Q̂`: rows and columns both run over `d`-part
/// compositions of `N`. Entry `(a, x)` is the coefficient of `w^a` in
/// `∏ⱼ (Σᵢ wᵢ hᵢⱼ)^{xⱼ}` divided by `C(N; a)`.
#[derive(Clone, Debug)]
pub struct DualTable<S> {
    n_balls: u32,
    states: CompositionSpace,
    values: Vec<Vec<S>>,
}

pub fn dual_table<S: Scalar>(h: &HMatrix<S>, n_balls: u32, capacity: u128) -> Result<DualTable<S>> {
    let d = h.d();
    let states = CompositionSpace::new(d, n_balls, capacity)?;
    let set = MultiIndexSet::new(d, n_balls, capacity)?;
    let cells = states.len() as u128 * states.len() as u128;
    if cells > capacity {
        return Err(Error::Capacity {
            needed: cells,
            limit: capacity,
        });
    }
    let mut values = vec![vec![S::zero(); states.len()]; states.len()];
    for (c, x) in states.iter().enumerate() {
        // expand ∏_j (Σ_i w_i h_ij)^{x_j}: homogeneous of degree N in w
        let mut coeffs = vec![S::zero(); set.len()];
        coeffs[0] = S::one();
        for (j, &count) in x.iter().enumerate() {
            for _ in 0..count {
                for idx in (1..set.len()).rev() {
                    let m = set.get(idx);
                    let mut acc = S::zero();
                    for l in 0..d {
                        if m[l] > 0 {
                            let mut prev = m.to_vec();
                            prev[l] -= 1;
                            let p_idx = set.index_of(&prev).expect("interior index");
                            acc = acc + h.entry(l, j).mul_ref(&coeffs[p_idx]);
                        }
                    }
                    coeffs[idx] = acc;
                }
                coeffs[0] = S::zero();
            }
        }
        for (a, row) in states.iter().enumerate() {
            let idx = set.index_of(row).expect("degree-N slice");
            let cn = big_to_rational(&multinomial(row));
            let inv = S::from_rational(&(BigRational::one() / cn));
            values[a][c] = coeffs[idx].mul_ref(&inv);
        }
    }
    Ok(DualTable {
        n_balls,
        states,
        values,
    })
}

impl<S: Scalar> DualTable<S> {
    pub fn n_balls(&self) -> u32 {
        self.n_balls
    }

    pub fn states(&self) -> &CompositionSpace {
        &self.states
    }

    pub fn value(&self, a_idx: usize, x_idx: usize) -> &S {
        &self.values[a_idx][x_idx]
    }
}

/// Deviation of the duality identity: `Q̂_a(x, H)` against `Q̂_x(a, Hᵀ)`.
pub fn duality_gap<S: Scalar>(h: &HMatrix<S>, n_balls: u32, capacity: u128) -> Result<f64> {
    let forward = dual_table(h, n_balls, capacity)?;
    let backward = dual_table(&h.transpose(), n_balls, capacity)?;
    let m = forward.states.len();
    let mut max_dev: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let dev = forward.values[a][b].clone() - backward.values[b][a].clone();
            max_dev = max_dev.max(dev.abs_f64());
        }
    }
    Ok(max_dev)
}

/// Both orthogonality relations of the self-dual system: summing over states
/// with weight `C(N; x)` against `δ_{ab}/C(N; a)`, and summing over indices
/// with weight `C(N; a)` against `δ_{xy}/C(N; x)`.
pub fn dual_orthogonality_gap<S: Scalar>(
    h: &HMatrix<S>,
    n_balls: u32,
    capacity: u128,
) -> Result<f64> {
    let table = dual_table(h, n_balls, capacity)?;
    let m = table.states.len();
    let weights: Vec<BigRational> = table
        .states
        .iter()
        .map(|x| big_to_rational(&multinomial(x)))
        .collect();
    let mut max_dev: f64 = 0.0;
    for a in 0..m {
        for b in a..m {
            let mut acc = S::zero();
            for x in 0..m {
                acc = acc + table.values[a][x]
                    .mul_ref(&table.values[b][x])
                    .mul_ref(&S::from_rational(&weights[x]));
            }
            if a == b {
                acc = acc - S::from_rational(&(BigRational::one() / &weights[a]));
            }
            max_dev = max_dev.max(acc.abs_f64());
        }
    }
    for x in 0..m {
        for y in x..m {
            let mut acc = S::zero();
            for a in 0..m {
                acc = acc + table.values[a][x]
                    .mul_ref(&table.values[a][y])
                    .mul_ref(&S::from_rational(&weights[a]));
            }
            if x == y {
                acc = acc - S::from_rational(&(BigRational::one() / &weights[x]));
            }
            max_dev = max_dev.max(acc.abs_f64());
        }
    }
    Ok(max_dev)
}

/// Both sides of the multiplicative transform identity
/// `Σ_x m(x) ∏ φ^x Q_n(x) = C(N; n⁺) T₀^{N-|n|} ∏ Tₗ^{nₗ}` with
/// `Tₗ = Σⱼ φⱼ pⱼ u⁽ˡ⁾ⱼ`.
#[derive(Clone, Debug)]
pub struct TransformCheck<S> {
    pub lhs: S,
    pub rhs: S,
    pub deviation: f64,
}

pub fn transform_check<S: Scalar>(
    p: &ProbabilityVector,
    basis: &OrthoBasis<S>,
    n_balls: u32,
    n: &[u32],
    phi: &[BigRational],
    capacity: u128,
) -> Result<TransformCheck<S>> {
    let d = p.d();
    if phi.len() != d || n.len() != d - 1 {
        return Err(Error::Dimension("phi or n has the wrong length".into()));
    }
    let states = CompositionSpace::new(d, n_balls, capacity)?;
    let mut lhs = S::zero();
    for x in states.iter() {
        let q = eval_q_gf(basis, x, n, capacity)?;
        let mut w = multinomial_pmf(x, p.as_slice());
        for (j, &count) in x.iter().enumerate() {
            w *= num::pow::pow(phi[j].clone(), count as usize);
        }
        lhs = lhs + q.mul_ref(&S::from_rational(&w));
    }
    let phi_s: Vec<S> = phi.iter().map(S::from_rational).collect();
    let ps: Vec<S> = p.to_scalars();
    let total: u32 = n.iter().sum();
    let mut rhs = S::from_rational(&big_to_rational(&multinomial(&extended(n, n_balls))));
    let mut t0 = S::zero();
    for j in 0..d {
        t0 = t0 + phi_s[j].mul_ref(&ps[j]);
    }
    rhs = rhs.mul_ref(&pow_u32(&t0, n_balls - total));
    for (l, &k) in n.iter().enumerate() {
        let mut tl = S::zero();
        for j in 0..d {
            tl = tl + phi_s[j].mul_ref(&ps[j]).mul_ref(&basis.row(l + 1)[j]);
        }
        rhs = rhs.mul_ref(&pow_u32(&tl, k));
    }
    let deviation = (lhs.clone() - rhs.clone()).abs_f64();
    Ok(TransformCheck {
        lhs,
        rhs,
        deviation,
    })
}

/// `E[Q_m(X, α) Q_n(X, β)]` for two bases over the same `p`: the cross Gram
/// matrix, diagonal `δ_{mn} C(N; n⁺)` exactly when the bases are
/// biorthogonal (`Σⱼ pⱼ α⁽ᵏ⁾ⱼ β⁽ˡ⁾ⱼ = δₖₗ`).
pub fn cross_gram<S: Scalar>(
    p: &ProbabilityVector,
    alpha: &OrthoBasis<S>,
    beta: &OrthoBasis<S>,
    n_balls: u32,
    capacity: u128,
) -> Result<Vec<Vec<S>>> {
    let d = p.d();
    let states = CompositionSpace::new(d, n_balls, capacity)?;
    let indices = MultiIndexSet::new(d - 1, n_balls, capacity)?;
    let mut acc = vec![vec![S::zero(); indices.len()]; indices.len()];
    for x in states.iter() {
        let (_, qa) = gf_column(alpha, x, n_balls, capacity)?;
        let (_, qb) = gf_column(beta, x, n_balls, capacity)?;
        let w = S::from_rational(&multinomial_pmf(x, p.as_slice()));
        for a in 0..indices.len() {
            for b in 0..indices.len() {
                acc[a][b] = acc[a][b].clone() + qa[a].mul_ref(&qb[b]).mul_ref(&w);
            }
        }
    }
    Ok(acc)
}

/// Largest `N` such that a full table at `(d, N)` fits the capacity budget.
pub fn max_table_degree(d: usize, capacity: u128) -> u32 {
    let cap = num::BigUint::from(capacity);
    let mut n = 0u32;
    loop {
        let states = binomial(n as u64 + 1 + d as u64 - 1, d as u64 - 1);
        if &states * &states > cap || n > 10_000 {
            return n;
        }
        n += 1;
    }
}
