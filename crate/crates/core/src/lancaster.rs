//! Bivariate distributions with multinomial margins: assembly from a
//! correlation sequence or a reversible kernel, extraction of correlations
//! from a joint table, the composition-level hypergroup triple sums, and the
//! positive linearization distribution they induce.

use std::collections::BTreeMap;


use crate::basis::{h_matrix, hypergroup_check, PositivityReport};
use crate::chains::CompositionChain;
use crate::comb::multinomial_pmf;
use crate::error::{Error, Result};
use crate::poly::{h_diamond, PolynomialTable};
use crate::scalar::Scalar;

/// A joint law `P(x,y)` on pairs of compositions whose margins are both the
/// multinomial `m(·,p)`, together with the generalized correlations `ρ_n`
/// that generate it: `E[Q_n(X) Q_m(Y)] = δ_{nm} h_n ρ_n`.
#[derive(Clone, Debug)]
pub struct BivariateTable<S> {
    pub values: Vec<Vec<S>>,
    pub rho: Vec<S>,
    pub n_balls: u32,
}

impl<S: Scalar> BivariateTable<S> {
    /// Deviation of the total mass from one.
    pub fn total_gap(&self) -> f64 {
        let mut acc = S::zero();
        for row in &self.values {
            for v in row {
                acc = acc + v.clone();
            }
        }
        (acc - S::one()).abs_f64()
    }

    /// Worst deviation of either margin from the multinomial pmf.
    pub fn margin_gap(&self, table: &PolynomialTable<S>) -> f64 {
        let states = table.states().len();
        let mut dev: f64 = 0.0;
        for i in 0..states {
            let target = S::from_rational(table.pmf(i));
            let mut row = S::zero();
            let mut col = S::zero();
            for j in 0..states {
                row = row + self.values[i][j].clone();
                col = col + self.values[j][i].clone();
            }
            dev = dev.max((row - target.clone()).abs_f64());
            dev = dev.max((col - target).abs_f64());
        }
        dev
    }

    /// Positivity sweep over all entries; the witness is the offending
    /// `(x, y)` state pair, 1-based.
    pub fn positivity(&self, tol: f64) -> PositivityReport {
        let mut values = Vec::new();
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                values.push(((i + 1, j + 1, 1), v.clone()));
            }
        }
        PositivityReport::collect(values, tol)
    }
}

/// Assemble `P(x,y) = m(x) m(y) (1 + Σ_{|n|≥1} ρ_n Q_n(x) Q_n(y) / h_n)` for
/// a correlation map (missing indices mean `ρ_n = 0`; the zero index is
/// implicitly 1 and ignored if supplied). Margins are multinomial by
/// construction; negativity is reported, never raised.
pub fn bivariate_from_correlations<S: Scalar>(
    rho: &BTreeMap<Vec<u32>, S>,
    table: &PolynomialTable<S>,
    tol: f64,
) -> Result<(BivariateTable<S>, PositivityReport)> {
    let indices = table.indices();
    let mut full_rho = vec![S::zero(); indices.len()];
    full_rho[0] = S::one();
    for (n, value) in rho {
        let idx = indices
            .index_of(n)
            .ok_or_else(|| Error::Dimension(format!("{n:?} is not an index of this system")))?;
        if idx == 0 {
            continue;
        }
        full_rho[idx] = value.clone();
    }
    let states = table.states().len();
    let inv_norms: Vec<S> = (0..indices.len())
        .map(|r| table.norm(r).invert())
        .collect::<Result<_>>()?;
    let mut values = vec![vec![S::zero(); states]; states];
    for x in 0..states {
        let mx = S::from_rational(table.pmf(x));
        for y in 0..states {
            let mut acc = S::one();
            for r in 1..indices.len() {
                if full_rho[r].is_zero() {
                    continue;
                }
                acc = acc + full_rho[r]
                    .mul_ref(table.value(r, x))
                    .mul_ref(table.value(r, y))
                    .mul_ref(&inv_norms[r]);
            }
            values[x][y] = acc.mul_ref(&mx).mul_ref(&S::from_rational(table.pmf(y)));
        }
    }
    let out = BivariateTable {
        values,
        rho: full_rho,
        n_balls: table.n_balls(),
    };
    let report = out.positivity(tol);
    Ok((out, report))
}

/// Correlations recovered from a joint table plus the worst off-diagonal
/// cross term `E[Q_n(X) Q_m(Y)]`, which vanishes exactly when `P` has a
/// diagonal expansion in this system.
#[derive(Clone, Debug)]
pub struct ExtractionReport<S> {
    pub rho: Vec<S>,
    pub max_cross: f64,
    pub worst_cross: (Vec<u32>, Vec<u32>),
    pub margin_gap: f64,
}

/// Recover `ρ_n = E[Q_n(X) Q_n(Y)] / h_n` from a joint table. Errors if the
/// margins are not multinomial to tolerance.
pub fn extract_correlations<S: Scalar>(
    joint: &BivariateTable<S>,
    table: &PolynomialTable<S>,
    tol: f64,
) -> Result<ExtractionReport<S>> {
    let margin_gap = joint.margin_gap(table);
    if margin_gap > tol {
        return Err(Error::Precondition(format!(
            "margins deviate from the multinomial by {margin_gap:.3e}"
        )));
    }
    let states = table.states().len();
    let indices = table.indices();
    let mut rho = Vec::with_capacity(indices.len());
    let mut max_cross: f64 = 0.0;
    let mut worst_cross = (indices.get(0).to_vec(), indices.get(0).to_vec());
    for n in 0..indices.len() {
        let inv_norm = table.norm(n).invert()?;
        for m in 0..indices.len() {
            let mut acc = S::zero();
            for x in 0..states {
                let mut inner = S::zero();
                for y in 0..states {
                    inner = inner + joint.values[x][y].mul_ref(table.value(m, y));
                }
                acc = acc + inner.mul_ref(table.value(n, x));
            }
            if n == m {
                rho.push(acc.mul_ref(&inv_norm));
            } else {
                let dev = acc.abs_f64();
                if dev > max_cross {
                    max_cross = dev;
                    worst_cross = (indices.get(n).to_vec(), indices.get(m).to_vec());
                }
            }
        }
    }
    Ok(ExtractionReport {
        rho,
        max_cross,
        worst_cross,
        margin_gap,
    })
}

/// The joint law of one step from stationarity: `P(x,y) = m(x) K(x,y)`.
/// Requires a reversible kernel (detailed balance within tolerance); the
/// stored correlations are extracted from the table and equal the chain's
/// eigenvalues when the polynomial system diagonalizes it.
pub fn bivariate_from_kernel<S: Scalar>(
    chain: &CompositionChain<S>,
    table: &PolynomialTable<S>,
    tol: f64,
) -> Result<BivariateTable<S>> {
    let gap = chain.reversibility_gap();
    if gap > tol {
        return Err(Error::Precondition(format!(
            "kernel is not reversible: detailed balance fails by {gap:.3e}"
        )));
    }
    let states = chain.states.len();
    let mut values = vec![vec![S::zero(); states]; states];
    for x in 0..states {
        let mx = S::from_rational(&multinomial_pmf(chain.states.get(x), chain.p.as_slice()));
        for y in 0..states {
            values[x][y] = mx.mul_ref(&chain.kernel[x][y]);
        }
    }
    let mut joint = BivariateTable {
        values,
        rho: Vec::new(),
        n_balls: chain.n_balls,
    };
    joint.rho = extract_correlations(&joint, table, tol)?.rho;
    Ok(joint)
}

/// The composition-level hypergroup sum
/// `Σ_n Q⋄_n(x) Q⋄_n(y) Q⋄_n(z) h⋄_n` over all indices, in the scaled
/// system `Q⋄_n = Q_n / Q_n(N e_d)`. Nonnegative for every triple exactly
/// when the base-level hypergroup check passes.
pub fn hypergroup_triple_sum<S: Scalar>(
    table: &PolynomialTable<S>,
    x: &[u32],
    y: &[u32],
    z: &[u32],
) -> Result<S> {
    let scaled = table.scaled_values()?;
    let states = table.states();
    let idx = |w: &[u32]| {
        states
            .index_of(w)
            .ok_or_else(|| Error::Dimension(format!("{w:?} is not a composition of this system")))
    };
    let (xi, yi, zi) = (idx(x)?, idx(y)?, idx(z)?);
    let mut acc = S::zero();
    for r in 0..table.indices().len() {
        let hd = h_diamond(table.basis(), table.n_balls(), table.indices().get(r));
        acc = acc + scaled[r][xi]
            .mul_ref(&scaled[r][yi])
            .mul_ref(&scaled[r][zi])
            .mul_ref(&hd);
    }
    Ok(acc)
}

/// The linearization law `φ_{xy}(z) = m(z) Σ_n Q⋄_n(x) Q⋄_n(y) Q⋄_n(z) h⋄_n`
/// satisfying `Q⋄_n(x) Q⋄_n(y) = Σ_z φ_{xy}(z) Q⋄_n(z)` for every index.
/// Requires the base-level hypergroup property, which makes every entry
/// nonnegative; the vector always sums to one.
pub fn linearization_distribution<S: Scalar>(
    table: &PolynomialTable<S>,
    x: &[u32],
    y: &[u32],
    tol: f64,
) -> Result<Vec<S>> {
    let h = h_matrix(table.p(), table.basis())?;
    let base = hypergroup_check(&h, tol)?;
    if !base.holds {
        return Err(Error::Precondition(format!(
            "hypergroup property fails at the base: triple {:?} gives {}",
            base.witness, base.min_display
        )));
    }
    let states = table.states().len();
    let mut out = Vec::with_capacity(states);
    for zi in 0..states {
        let v = hypergroup_triple_sum(table, x, y, table.states().get(zi))?;
        out.push(v.mul_ref(&S::from_rational(table.pmf(zi))));
    }
    Ok(out)
}

/// Worst deviation of the linearization identity
/// `Q⋄_n(x) Q⋄_n(y) = Σ_z φ(z) Q⋄_n(z)` across all indices, for a vector φ
/// over the states.
pub fn linearization_identity_gap<S: Scalar>(
    table: &PolynomialTable<S>,
    x: &[u32],
    y: &[u32],
    phi: &[S],
) -> Result<f64> {
    let scaled = table.scaled_values()?;
    let states = table.states();
    let xi = states
        .index_of(x)
        .ok_or_else(|| Error::Dimension("x is not a state".into()))?;
    let yi = states
        .index_of(y)
        .ok_or_else(|| Error::Dimension("y is not a state".into()))?;
    let mut dev: f64 = 0.0;
    for r in 0..table.indices().len() {
        let mut acc = S::zero();
        for (zi, weight) in phi.iter().enumerate() {
            acc = acc + weight.mul_ref(&scaled[r][zi]);
        }
        acc = acc - scaled[r][xi].mul_ref(&scaled[r][yi]);
        dev = dev.max(acc.abs_f64());
    }
    Ok(dev)
}

/// Total mass of a candidate distribution minus one, as `f64`.
pub fn mass_gap<S: Scalar>(phi: &[S]) -> f64 {
    let mut acc = S::zero();
    for v in phi {
        acc = acc + v.clone();
    }
    (acc - S::one()).abs_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{helmert, OrthoBasis, ProbabilityVector};
    use crate::chains::{
        independent_all_chain, lancaster_kernel, metropolis_chain, single_site_chain,
    };
    use crate::exact::Exact;
    use crate::poly::build_table;
    use crate::scalar::big_rational;

    const CAP: u128 = 1_000_000;

    fn pv(entries: &[(i64, i64)]) -> ProbabilityVector {
        ProbabilityVector::new(entries.iter().map(|&(n, d)| big_rational(n, d)).collect()).unwrap()
    }

    fn exact_table(p: &ProbabilityVector, n_balls: u32) -> crate::poly::PolynomialTable<Exact> {
        let u: OrthoBasis<Exact> = helmert(p).unwrap();
        build_table(p, &u, n_balls, CAP).unwrap()
    }

    #[test]
    fn zero_correlations_give_independence() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let table = exact_table(&p, 2);
        let (joint, report) =
            bivariate_from_correlations(&BTreeMap::new(), &table, 0.0).unwrap();
        assert!(report.holds);
        assert_eq!(joint.total_gap(), 0.0);
        assert_eq!(joint.margin_gap(&table), 0.0);
        for x in 0..table.states().len() {
            for y in 0..table.states().len() {
                let expect = Exact::from_rational(table.pmf(x))
                    .mul_ref(&Exact::from_rational(table.pmf(y)));
                assert_eq!(joint.values[x][y], expect);
            }
        }
    }

    #[test]
    fn unit_correlations_give_diagonal() {
        for (p, n_balls) in [
            (pv(&[(1, 2), (1, 2)]), 3),
            (pv(&[(1, 2), (1, 3), (1, 6)]), 2),
        ] {
            let table = exact_table(&p, n_balls);
            let mut rho = BTreeMap::new();
            for r in 1..table.indices().len() {
                rho.insert(table.indices().get(r).to_vec(), Exact::integer(1));
            }
            let (joint, report) = bivariate_from_correlations(&rho, &table, 0.0).unwrap();
            assert!(report.holds);
            for x in 0..table.states().len() {
                for y in 0..table.states().len() {
                    let expect = if x == y {
                        Exact::from_rational(table.pmf(x))
                    } else {
                        Exact::integer(0)
                    };
                    assert_eq!(joint.values[x][y], expect, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn inadmissible_correlation_detected() {
        let p = pv(&[(1, 2), (1, 2)]);
        let table = exact_table(&p, 1);
        let mut rho = BTreeMap::new();
        rho.insert(vec![1], Exact::ratio(-3, 2));
        let (joint, report) = bivariate_from_correlations(&rho, &table, 0.0).unwrap();
        assert!(!report.holds);
        assert_eq!(joint.values[0][0], Exact::ratio(-1, 8));
        assert_eq!(report.witness, (1, 1, 1));
        assert_eq!(joint.total_gap(), 0.0);
        assert_eq!(joint.margin_gap(&table), 0.0);
    }

    #[test]
    fn correlations_round_trip_exactly() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let table = exact_table(&p, 3);
        let mut rho = BTreeMap::new();
        rho.insert(vec![1, 0], Exact::ratio(1, 3));
        rho.insert(vec![0, 1], Exact::ratio(-1, 7));
        rho.insert(vec![1, 1], Exact::ratio(2, 11));
        rho.insert(vec![3, 0], Exact::ratio(1, 50));
        let (joint, _) = bivariate_from_correlations(&rho, &table, 0.0).unwrap();
        let report = extract_correlations(&joint, &table, 0.0).unwrap();
        assert_eq!(report.max_cross, 0.0);
        assert_eq!(report.rho, joint.rho);
        for r in 1..table.indices().len() {
            let expect = rho
                .get(table.indices().get(r))
                .cloned()
                .unwrap_or_else(|| Exact::integer(0));
            assert_eq!(report.rho[r], expect);
        }
    }

    #[test]
    fn kernel_correlations_match_eigenvalues() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let ball = metropolis_chain::<Exact>(&p).unwrap();
        let chain = single_site_chain(&ball, 2, CAP).unwrap();
        let table = build_table(&p, &ball.eigen.alpha_basis(), 2, CAP).unwrap();
        let joint = bivariate_from_kernel(&chain, &table, 0.0).unwrap();
        assert_eq!(joint.rho, chain.lambda);
        assert_eq!(joint.margin_gap(&table), 0.0);
    }

    #[test]
    fn ehrenfest_kernel_correlations() {
        let p = pv(&[(1, 2), (1, 2)]);
        let chain = crate::chains::lightbulb_chain::<Exact>(2, 1, CAP).unwrap();
        let table = exact_table(&p, 2);
        let joint = bivariate_from_kernel(&chain, &table, 0.0).unwrap();
        let i1 = table.indices().index_of(&[1]).unwrap();
        let i2 = table.indices().index_of(&[2]).unwrap();
        assert_eq!(joint.rho[i1], Exact::integer(0));
        assert_eq!(joint.rho[i2], Exact::integer(-1));
    }

    #[test]
    fn non_reversible_kernel_rejected() {
        let q = vec![
            big_rational(0, 1),
            big_rational(1, 1),
            big_rational(0, 1),
        ];
        let ball = crate::chains::circulant_chain(&q).unwrap();
        let chain = single_site_chain(&ball, 2, CAP).unwrap();
        let table = build_table(
            &ball.p,
            &ball.eigen.alpha_basis(),
            2,
            CAP,
        )
        .unwrap();
        assert!(bivariate_from_kernel(&chain, &table, 1e-9).is_err());
    }

    #[test]
    fn identity_kernel_has_unit_correlations() {
        let p = pv(&[(1, 2), (1, 2)]);
        let u: OrthoBasis<Exact> = helmert(&p).unwrap();
        let (ball, _) = lancaster_kernel(&[Exact::integer(1)], &u, &p, 0.0).unwrap();
        let chain = independent_all_chain(&ball, 2, CAP).unwrap();
        let table = exact_table(&p, 2);
        let joint = bivariate_from_kernel(&chain, &table, 0.0).unwrap();
        assert!(joint.rho.iter().all(|r| r == &Exact::integer(1)));
    }

    #[test]
    fn triple_sum_at_pure_state_is_completeness() {
        let p = pv(&[(2, 3), (1, 3)]);
        let table = exact_table(&p, 2);
        let ned = vec![0u32, 2];
        for x in 0..table.states().len() {
            for y in 0..table.states().len() {
                let v = hypergroup_triple_sum(
                    &table,
                    table.states().get(x),
                    table.states().get(y),
                    &ned,
                )
                .unwrap();
                let expect = if x == y {
                    Exact::from_rational(table.pmf(x)).invert().unwrap()
                } else {
                    Exact::integer(0)
                };
                assert_eq!(v, expect, "({x},{y})");
            }
        }
    }

    #[test]
    fn triple_sums_nonnegative_for_strongly_monotone_base() {
        let p = pv(&[(2, 3), (1, 3)]);
        let table = exact_table(&p, 2);
        for x in table.states().iter() {
            for y in table.states().iter() {
                for z in table.states().iter() {
                    let v = hypergroup_triple_sum(&table, x, y, z).unwrap();
                    assert!(v.is_nonneg_within(0.0), "({x:?},{y:?},{z:?}) = {v}");
                }
            }
        }
    }

    #[test]
    fn triple_sum_negative_when_base_fails() {
        let p = pv(&[(2, 5), (7, 20), (1, 4)]);
        let table = exact_table(&p, 1);
        let mut found = false;
        for x in table.states().iter() {
            for y in table.states().iter() {
                for z in table.states().iter() {
                    let v = hypergroup_triple_sum(&table, x, y, z).unwrap();
                    if !v.is_nonneg_within(0.0) {
                        found = true;
                    }
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn linearization_binary_example() {
        let p = pv(&[(1, 2), (1, 2)]);
        let table = exact_table(&p, 2);
        let phi = linearization_distribution(&table, &[2, 0], &[0, 2], 0.0).unwrap();
        assert_eq!(
            phi,
            vec![Exact::integer(1), Exact::integer(0), Exact::integer(0)]
        );
        assert_eq!(mass_gap(&phi), 0.0);
        assert_eq!(
            linearization_identity_gap(&table, &[2, 0], &[0, 2], &phi).unwrap(),
            0.0
        );
    }

    #[test]
    fn linearization_at_pure_state_is_point_mass() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let table = exact_table(&p, 2);
        let ned = vec![0u32, 0, 2];
        let phi = linearization_distribution(&table, &ned, &ned, 0.0).unwrap();
        for (zi, v) in phi.iter().enumerate() {
            let expect = if table.states().get(zi) == &ned[..] {
                Exact::integer(1)
            } else {
                Exact::integer(0)
            };
            assert_eq!(v, &expect);
        }
    }

    #[test]
    fn linearization_is_distribution_for_all_pairs() {
        let p = pv(&[(1, 2), (1, 3), (1, 6)]);
        let table = exact_table(&p, 2);
        for x in table.states().iter() {
            for y in table.states().iter() {
                let phi = linearization_distribution(&table, x, y, 0.0).unwrap();
                assert_eq!(mass_gap(&phi), 0.0);
                assert!(phi.iter().all(|v| v.is_nonneg_within(0.0)));
                assert_eq!(
                    linearization_identity_gap(&table, x, y, &phi).unwrap(),
                    0.0
                );
            }
        }
    }

    #[test]
    fn linearization_needs_hypergroup() {
        let p = pv(&[(2, 5), (7, 20), (1, 4)]);
        let table = exact_table(&p, 2);
        assert!(linearization_distribution(&table, &[2, 0, 0], &[0, 2, 0], 0.0).is_err());
    }
}
