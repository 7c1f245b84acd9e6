//! Structural expansions of the polynomial family: coefficients over
//! monomials in the linear statistics `Sₗ(x) = Σⱼ u⁽ˡ⁾ⱼ xⱼ`, the three-term
//! recurrence checked against a projection oracle, and the reproducing
//! kernels of the orthonormalized system.

use std::collections::BTreeMap;

use num::{BigRational, One};

use crate::basis::OrthoBasis;
use crate::comb::{big_to_rational, factorial, MultiIndexSet};
use crate::error::{Error, Result};
use crate::poly::{build_table, PolynomialTable};
use crate::scalar::{pow_u32, Scalar};

/// Exact Gaussian elimination. Requires an exact backend: float pivoting has
/// no business deciding structural identities.
pub fn solve_exact<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>> {
    if !S::EXACT {
        return Err(Error::Precondition(
            "coefficient extraction needs an exact scalar backend".into(),
        ));
    }
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut pivot_rows = Vec::with_capacity(cols);
    let mut next_row = 0usize;
    for col in 0..cols {
        let Some(pr) = (next_row..rows).find(|&r| !a[r][col].is_zero()) else {
            return Err(Error::Invalid(
                "monomial system is singular on this grid".into(),
            ));
        };
        a.swap(next_row, pr);
        b.swap(next_row, pr);
        let inv = a[next_row][col].invert()?;
        for c in col..cols {
            a[next_row][c] = a[next_row][c].mul_ref(&inv);
        }
        b[next_row] = b[next_row].mul_ref(&inv);
        for r in 0..rows {
            if r != next_row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..cols {
                    let sub = a[next_row][c].mul_ref(&f);
                    a[r][c] = a[r][c].clone() - sub;
                }
                let sub = b[next_row].mul_ref(&f);
                b[r] = b[r].clone() - sub;
            }
        }
        pivot_rows.push(next_row);
        next_row += 1;
    }
    for r in next_row..rows {
        if !b[r].is_zero() {
            return Err(Error::Invalid("monomial system is inconsistent".into()));
        }
    }
    Ok((0..cols).map(|c| b[pivot_rows[c]].clone()).collect())
}

/// Values of the linear statistics `S₁(x), …, S_{d-1}(x)`.
pub fn s_values<S: Scalar>(basis: &OrthoBasis<S>, x: &[u32]) -> Vec<S> {
    let d = basis.d();
    (1..d)
        .map(|l| {
            let mut acc = S::zero();
            for (j, &count) in x.iter().enumerate() {
                let c = S::from_int(count as i64);
                acc = acc + basis.row(l)[j].mul_ref(&c);
            }
            acc
        })
        .collect()
}

fn monomial_value<S: Scalar>(s: &[S], m: &[u32]) -> S {
    let mut acc = S::one();
    for (l, &k) in m.iter().enumerate() {
        acc = acc.mul_ref(&pow_u32(&s[l], k));
    }
    acc
}

/// The unique expansion of row `n_idx` of the table over monomials
/// `∏ Sₗ^{mₗ}` with `|m| ≤ N`, solved exactly on the state grid. Only
/// nonzero coefficients are returned.
pub fn s_monomial_coefficients<S: Scalar>(
    table: &PolynomialTable<S>,
    n_idx: usize,
) -> Result<BTreeMap<Vec<u32>, S>> {
    let states = table.states();
    let indices = table.indices();
    let mut a = Vec::with_capacity(states.len());
    for x in states.iter() {
        let s = s_values(table.basis(), x);
        a.push(
            (0..indices.len())
                .map(|c| monomial_value(&s, indices.get(c)))
                .collect(),
        );
    }
    let b = table.row(n_idx).to_vec();
    let solution = solve_exact(a, b)?;
    let mut out = BTreeMap::new();
    for (c, v) in solution.into_iter().enumerate() {
        if !v.is_zero() {
            out.insert(indices.get(c).to_vec(), v);
        }
    }
    Ok(out)
}

/// Structural facts about one polynomial's monomial expansion, extracted at
/// consecutive state-space levels.
///
/// The leading slice is always the single monomial `S^n/∏ nₗ!` and no
/// coefficient survives above total degree `|n|`; both are asserted here.
/// The lower-order coefficients, by contrast, genuinely depend on the level:
/// on the grid `|x| = N` the constant statistic `Σⱼ xⱼ = N` folds into them
/// (already at `d = 2`, `n = (2)` the constant term is `-N/2`), so
/// `full_map_stable` reports whether the two maps coincide rather than
/// requiring it.
#[derive(Clone, Debug)]
pub struct StabilityReport<S> {
    pub n: Vec<u32>,
    pub coefficients: BTreeMap<Vec<u32>, S>,
    pub coefficients_next: BTreeMap<Vec<u32>, S>,
    pub degree_bound_ok: bool,
    pub leading_ok: bool,
    pub full_map_stable: bool,
}

pub fn stability_check<S: Scalar>(
    table: &PolynomialTable<S>,
    table_next: &PolynomialTable<S>,
    n: &[u32],
) -> Result<StabilityReport<S>> {
    if table_next.n_balls() != table.n_balls() + 1 {
        return Err(Error::Dimension(
            "second table must sit one level above the first".into(),
        ));
    }
    let n_idx = table
        .indices()
        .index_of(n)
        .ok_or_else(|| Error::Dimension(format!("index {n:?} not in the table")))?;
    let n_idx_next = table_next.indices().index_of(n).expect("index embeds");
    let coefficients = s_monomial_coefficients(table, n_idx)?;
    let coefficients_next = s_monomial_coefficients(table_next, n_idx_next)?;
    let total: u32 = n.iter().sum();
    let mut degree_bound_ok = true;
    let mut leading_ok = true;
    for map in [&coefficients, &coefficients_next] {
        for (m, v) in map.iter() {
            let deg: u32 = m.iter().sum();
            if deg > total {
                degree_bound_ok = false;
            }
            if deg == total && m != n && !v.is_zero() {
                leading_ok = false;
            }
        }
        let mut lead = BigRational::one();
        for &k in n {
            lead /= big_to_rational(&factorial(k));
        }
        match map.get(n) {
            Some(v) if (v.clone() - S::from_rational(&lead)).is_zero() => {}
            _ => leading_ok = false,
        }
    }
    let full_map_stable = coefficients == coefficients_next;
    Ok(StabilityReport {
        n: n.to_vec(),
        coefficients,
        coefficients_next,
        degree_bound_ok,
        leading_ok,
        full_map_stable,
    })
}

/// One term in the comparison of the recurrence `Sᵢ · ∏nₗ! Q_n = Σ_m c_m ∏mₗ! Q_m`.
#[derive(Clone, Debug)]
pub struct RecurrenceEntry<S> {
    pub m: Vec<u32>,
    /// Oracle value: the exact projection of `Sᵢ ∏nₗ! Q_n` onto `∏mₗ! Q_m`.
    pub projected: S,
    /// Coefficient as displayed in the source recurrence (no multiplicities).
    pub claimed: S,
    /// Coefficient with the occupancy multiplicities `nᵢ`, `nₗ` restored.
    pub adjusted: S,
}

/// Projection-oracle comparison of the recurrence for multiplying by `Sᵢ`.
///
/// The adjusted set is
/// `S_i Q*_n = Q*_{n+e_i} + aᵢ nᵢ (N-|n|+1) Q*_{n-e_i}
///  + Σ_{l,k≥1} nₗ (c(i,l,k)/aₖ) Q*_{n-e_l+e_k}`
/// with `Q*_n = ∏nₗ! Q_n` and `c(i,l,k) = Σⱼ u⁽ⁱ⁾u⁽ˡ⁾u⁽ᵏ⁾pⱼ`; the claimed
/// set omits the factors `nᵢ` and `nₗ`. Terms with `|m| > N` drop out because
/// those polynomials vanish identically on the level-`N` grid.
#[derive(Clone, Debug)]
pub struct RecurrenceReport<S> {
    pub i: usize,
    pub n: Vec<u32>,
    pub entries: Vec<RecurrenceEntry<S>>,
    pub claimed_matches: bool,
    pub adjusted_matches: bool,
}

pub fn recurrence_coefficients<S: Scalar>(
    table: &PolynomialTable<S>,
    i: usize,
    n: &[u32],
    tol: f64,
) -> Result<RecurrenceReport<S>> {
    let d = table.d();
    if i == 0 || i >= d {
        return Err(Error::Dimension(format!(
            "statistic index i must lie in 1..={}",
            d - 1
        )));
    }
    let indices = table.indices();
    let n_idx = indices
        .index_of(n)
        .ok_or_else(|| Error::Dimension(format!("index {n:?} not in the table")))?;
    let n_balls = table.n_balls();
    let total: u32 = n.iter().sum();
    let basis = table.basis().clone();
    let star = |m: &[u32]| -> BigRational {
        let mut f = BigRational::one();
        for &k in m {
            f *= big_to_rational(&factorial(k));
        }
        f
    };

    // oracle: expand S_i Q*_n over the complete family {Q*_m} on the grid
    let si: Vec<S> = table
        .states()
        .iter()
        .map(|x| {
            let s = s_values(&basis, x);
            s[i - 1].clone()
        })
        .collect();
    let n_star = S::from_rational(&star(n));
    let mut projections: Vec<S> = Vec::with_capacity(indices.len());
    for m_idx in 0..indices.len() {
        let mut num = S::zero();
        for c in 0..table.states().len() {
            let w = S::from_rational(table.pmf(c));
            num = num
                + si[c]
                    .mul_ref(table.value(n_idx, c))
                    .mul_ref(table.value(m_idx, c))
                    .mul_ref(&w);
        }
        num = num.mul_ref(&n_star);
        let m_star = S::from_rational(&star(indices.get(m_idx)));
        let denom = m_star.mul_ref(table.norm(m_idx));
        projections.push(num.div(&denom)?);
    }

    // claimed and adjusted coefficient maps
    let c = crate::basis::triple_products(table.p(), &basis);
    let mut claimed: BTreeMap<Vec<u32>, S> = BTreeMap::new();
    let mut adjusted: BTreeMap<Vec<u32>, S> = BTreeMap::new();
    let add = |map: &mut BTreeMap<Vec<u32>, S>, m: Vec<u32>, v: S| {
        let slot = map.entry(m).or_insert_with(S::zero);
        *slot = slot.clone() + v;
    };
    if total + 1 <= n_balls {
        let mut up = n.to_vec();
        up[i - 1] += 1;
        add(&mut claimed, up.clone(), S::one());
        add(&mut adjusted, up, S::one());
    }
    if n[i - 1] >= 1 {
        let mut down = n.to_vec();
        down[i - 1] -= 1;
        let base = basis
            .weight(i)
            .mul_ref(&S::from_int((n_balls - total + 1) as i64));
        add(&mut claimed, down.clone(), base.clone());
        add(
            &mut adjusted,
            down,
            base.mul_ref(&S::from_int(n[i - 1] as i64)),
        );
    }
    for l in 1..d {
        if n[l - 1] == 0 {
            continue;
        }
        for k in 1..d {
            let coeff = c[i][l][k].div(basis.weight(k))?;
            if coeff.is_zero() {
                continue;
            }
            let mut m = n.to_vec();
            m[l - 1] -= 1;
            m[k - 1] += 1;
            add(&mut claimed, m.clone(), coeff.clone());
            add(
                &mut adjusted,
                m,
                coeff.mul_ref(&S::from_int(n[l - 1] as i64)),
            );
        }
    }

    let mut entries = Vec::new();
    let mut claimed_matches = true;
    let mut adjusted_matches = true;
    for m_idx in 0..indices.len() {
        let m = indices.get(m_idx).to_vec();
        let proj = projections[m_idx].clone();
        let cl = claimed.get(&m).cloned().unwrap_or_else(S::zero);
        let ad = adjusted.get(&m).cloned().unwrap_or_else(S::zero);
        let any = !proj.is_zero_within(tol) || !cl.is_zero_within(tol) || !ad.is_zero_within(tol);
        if !(proj.clone() - cl.clone()).is_zero_within(tol) {
            claimed_matches = false;
        }
        if !(proj.clone() - ad.clone()).is_zero_within(tol) {
            adjusted_matches = false;
        }
        if any {
            entries.push(RecurrenceEntry {
                m,
                projected: proj,
                claimed: cl,
                adjusted: ad,
            });
        }
    }
    Ok(RecurrenceReport {
        i,
        n: n.to_vec(),
        entries,
        claimed_matches,
        adjusted_matches,
    })
}

/// Degree-sliced reproducing kernels of the orthonormalized system:
/// `K_deg(x,y) = Σ_{|n|=deg} Q_n(x) Q_n(y) / E[Q_n²]`, indexed `[deg][x][y]`.
pub fn reproducing_kernels<S: Scalar>(table: &PolynomialTable<S>) -> Result<Vec<Vec<Vec<S>>>> {
    let states = table.states().len();
    let n_balls = table.n_balls();
    let mut kernels = vec![vec![vec![S::zero(); states]; states]; n_balls as usize + 1];
    for r in 0..table.indices().len() {
        let deg = table.indices().degree(r) as usize;
        let inv_norm = table.norm(r).invert()?;
        for x in 0..states {
            for y in x..states {
                let v = table
                    .value(r, x)
                    .mul_ref(table.value(r, y))
                    .mul_ref(&inv_norm);
                kernels[deg][x][y] = kernels[deg][x][y].clone() + v.clone();
                if x != y {
                    kernels[deg][y][x] = kernels[deg][y][x].clone() + v;
                }
            }
        }
    }
    Ok(kernels)
}

/// Worst deviation of `Σ_deg K_deg(x,y)` from `δ_{xy}/m(x)`: completeness of
/// the system as a basis of functions on the grid.
pub fn completeness_gap<S: Scalar>(table: &PolynomialTable<S>) -> Result<f64> {
    let kernels = reproducing_kernels(table)?;
    let states = table.states().len();
    let mut max_dev: f64 = 0.0;
    for x in 0..states {
        for y in 0..states {
            let mut acc = S::zero();
            for k in &kernels {
                acc = acc + k[x][y].clone();
            }
            if x == y {
                let inv = S::from_rational(table.pmf(x)).invert()?;
                acc = acc - inv;
            }
            max_dev = max_dev.max(acc.abs_f64());
        }
    }
    Ok(max_dev)
}

/// Worst deviation of the leading-coefficient reconstruction
/// `E[S^n(Y) K_{|n|}(x, Y)] = ∏nₗ! · Q_n(x)`: projecting the raw monomial
/// onto the degree slice recovers the polynomial, which pins down its
/// leading term.
pub fn monomial_projection_gap<S: Scalar>(table: &PolynomialTable<S>) -> Result<f64> {
    let kernels = reproducing_kernels(table)?;
    let states = table.states();
    let indices = table.indices();
    let s_all: Vec<Vec<S>> = states.iter().map(|x| s_values(table.basis(), x)).collect();
    let mut max_dev: f64 = 0.0;
    for r in 0..indices.len() {
        let n = indices.get(r);
        let deg = indices.degree(r) as usize;
        let mut fact = BigRational::one();
        for &k in n {
            fact *= big_to_rational(&factorial(k));
        }
        let fact = S::from_rational(&fact);
        for x in 0..states.len() {
            let mut acc = S::zero();
            for y in 0..states.len() {
                let w = S::from_rational(table.pmf(y));
                acc = acc
                    + monomial_value(&s_all[y], n)
                        .mul_ref(&kernels[deg][x][y])
                        .mul_ref(&w);
            }
            let expect = fact.mul_ref(table.value(r, x));
            max_dev = max_dev.max((acc - expect).abs_f64());
        }
    }
    Ok(max_dev)
}

/// Convenience: build the two tables at consecutive levels and run the
/// stability check for every index with `|n| ≤ N`.
pub fn stability_sweep<S: Scalar>(
    p: &crate::basis::ProbabilityVector,
    basis: &OrthoBasis<S>,
    n_balls: u32,
    capacity: u128,
) -> Result<Vec<StabilityReport<S>>> {
    let table = build_table(p, basis, n_balls, capacity)?;
    let table_next = build_table(p, basis, n_balls + 1, capacity)?;
    let set = MultiIndexSet::new(p.d() - 1, n_balls, capacity)?;
    set.iter()
        .map(|n| stability_check(&table, &table_next, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{helmert, validate_basis, xu, ProbabilityVector};
    use crate::exact::Exact;
    use crate::scalar::big_rational;

    const CAP: u128 = 1_000_000;

    fn pv(entries: &[(i64, i64)]) -> ProbabilityVector {
        ProbabilityVector::new(entries.iter().map(|&(n, d)| big_rational(n, d)).collect()).unwrap()
    }

    #[test]
    fn solves_small_rational_systems() {
        let a = vec![
            vec![Exact::integer(2), Exact::integer(1)],
            vec![Exact::integer(1), Exact::integer(-1)],
            vec![Exact::integer(3), Exact::integer(0)],
        ];
        let b = vec![Exact::integer(5), Exact::integer(1), Exact::integer(6)];
        let sol = solve_exact(a, b).unwrap();
        assert_eq!(sol, vec![Exact::integer(2), Exact::integer(1)]);
    }

    #[test]
    fn rejects_float_backends() {
        let a = vec![vec![1.0f64]];
        assert!(solve_exact(a, vec![1.0]).is_err());
    }

    #[test]
    fn binary_expansion_shows_level_dependence() {
        let p = ProbabilityVector::uniform(2);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let t2 = build_table(&p, &b, 2, CAP).unwrap();
        let t3 = build_table(&p, &b, 3, CAP).unwrap();
        let rep = stability_check(&t2, &t3, &[2]).unwrap();
        assert!(rep.degree_bound_ok);
        assert!(rep.leading_ok);
        // constant term is -N/2, so the full maps cannot agree across levels
        assert!(!rep.full_map_stable);
        assert_eq!(rep.coefficients.get(&vec![0]).unwrap(), &Exact::integer(-1));
        assert_eq!(
            rep.coefficients_next.get(&vec![0]).unwrap(),
            &Exact::ratio(-3, 2)
        );
        assert_eq!(rep.coefficients.get(&vec![2]).unwrap(), &Exact::ratio(1, 2));
        assert_eq!(
            rep.coefficients_next.get(&vec![2]).unwrap(),
            &Exact::ratio(1, 2)
        );
    }

    #[test]
    fn degree_and_leading_term_hold_across_bases() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        for basis in [helmert::<Exact>(&p).unwrap(), xu::<Exact>(&p).unwrap()] {
            for rep in stability_sweep(&p, &basis, 3, CAP).unwrap() {
                assert!(rep.degree_bound_ok, "n={:?}", rep.n);
                assert!(rep.leading_ok, "n={:?}", rep.n);
            }
        }
    }

    #[test]
    fn first_degree_expansions_are_stable() {
        // |n| = 1 has no lower-order terms to absorb the level, so the
        // literal map comparison does hold there
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = xu(&p).unwrap();
        for rep in stability_sweep(&p, &b, 2, CAP).unwrap() {
            let total: u32 = rep.n.iter().sum();
            if total <= 1 {
                assert!(rep.full_map_stable, "n={:?}", rep.n);
            }
        }
    }

    #[test]
    fn recurrence_binary_multiplicity() {
        let p = ProbabilityVector::uniform(2);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let t = build_table(&p, &b, 3, CAP).unwrap();
        // n = (2): the down coefficient is n_i (N - |n| + 1) = 2·2 = 4, not 2
        let rep = recurrence_coefficients(&t, 1, &[2], 0.0).unwrap();
        assert!(rep.adjusted_matches);
        assert!(!rep.claimed_matches);
        let down = rep.entries.iter().find(|e| e.m == vec![1]).unwrap();
        assert_eq!(down.projected, Exact::integer(4));
        assert_eq!(down.claimed, Exact::integer(2));
        assert_eq!(down.adjusted, Exact::integer(4));
        // n = (1): all multiplicities are 1, both sets match
        let rep1 = recurrence_coefficients(&t, 1, &[1], 0.0).unwrap();
        assert!(rep1.adjusted_matches);
        assert!(rep1.claimed_matches);
    }

    #[test]
    fn recurrence_adjusted_matches_oracle_generally() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        for basis in [helmert::<Exact>(&p).unwrap(), xu::<Exact>(&p).unwrap()] {
            let t = build_table(&p, &basis, 3, CAP).unwrap();
            for i in 1..=2usize {
                for n_idx in 0..t.indices().len() {
                    let n = t.indices().get(n_idx).to_vec();
                    let rep = recurrence_coefficients(&t, i, &n, 0.0).unwrap();
                    assert!(rep.adjusted_matches, "i={i} n={n:?}");
                }
            }
        }
    }

    #[test]
    fn recurrence_at_top_degree_drops_up_term() {
        let p = ProbabilityVector::uniform(2);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let t = build_table(&p, &b, 2, CAP).unwrap();
        let rep = recurrence_coefficients(&t, 1, &[2], 0.0).unwrap();
        assert!(rep.adjusted_matches);
        assert!(rep.entries.iter().all(|e| e.m != vec![3]));
    }

    #[test]
    fn kernels_are_rotation_invariant() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let c = Exact::ratio(3, 5);
        let s = Exact::ratio(4, 5);
        let rot1: Vec<Exact> = (0..3)
            .map(|j| c.mul_ref(&b.row(1)[j]) + s.mul_ref(&b.row(2)[j]))
            .collect();
        let rot2: Vec<Exact> = (0..3)
            .map(|j| c.mul_ref(&b.row(2)[j]) - s.mul_ref(&b.row(1)[j]))
            .collect();
        let rotated = OrthoBasis::from_rows(
            vec![b.row(0).to_vec(), rot1, rot2],
            vec![Exact::integer(1); 3],
        );
        let report = validate_basis(&p, &rotated, 0.0);
        assert!(report.ok, "{}", report.detail);
        let t1 = build_table(&p, &b, 2, CAP).unwrap();
        let t2 = build_table(&p, &rotated, 2, CAP).unwrap();
        let k1 = reproducing_kernels(&t1).unwrap();
        let k2 = reproducing_kernels(&t2).unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn kernel_degree_zero_is_one() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let b: OrthoBasis<Exact> = helmert(&p).unwrap();
        let t = build_table(&p, &b, 2, CAP).unwrap();
        let k = reproducing_kernels(&t).unwrap();
        for row in &k[0] {
            for v in row {
                assert_eq!(v, &Exact::integer(1));
            }
        }
    }

    #[test]
    fn kernels_sum_to_inverse_weights() {
        for (entries, n_balls) in [
            (vec![(1i64, 2i64), (1, 2)], 4u32),
            (vec![(1, 2), (1, 3), (1, 6)], 2),
        ] {
            let p = pv(&entries);
            let b: OrthoBasis<Exact> = helmert(&p).unwrap();
            let t = build_table(&p, &b, n_balls, CAP).unwrap();
            assert_eq!(completeness_gap(&t).unwrap(), 0.0);
        }
    }

    #[test]
    fn monomial_projection_recovers_polynomials() {
        for (entries, n_balls) in [
            (vec![(1i64, 2i64), (1, 2)], 4u32),
            (vec![(1, 2), (1, 3), (1, 6)], 3),
        ] {
            let p = pv(&entries);
            for basis in [helmert::<Exact>(&p).unwrap(), xu::<Exact>(&p).unwrap()] {
                let t = build_table(&p, &basis, n_balls, CAP).unwrap();
                assert_eq!(monomial_projection_gap(&t).unwrap(), 0.0);
            }
        }
    }
}
