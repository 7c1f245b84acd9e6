//! End-to-end acceptance battery. Ten checks, one test each, in dependency
//! order: orthogonality, evaluator agreement, the conditional-binomial
//! identity, duality, hypergroup positivity, the Metropolis spectrum,
//! composition lifts against the product-chain lumping oracle, Lancaster
//! round trips, linearization laws, and seeded simulation. Exact backends
//! must come out at literal zero; floating backends get 1e-10.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use krawtchouk::basis::{
    character_basis, gks_check, h_matrix, hadamard4_table, helmert, hypergroup_check, s3_table,
    xu, OrthoBasis, ProbabilityVector,
};
use krawtchouk::chains::{
    circulant_chain, dynkin_lump, ehrenfest_chain, independent_all_chain, lancaster_kernel,
    lancaster_urn_chain, lightbulb_chain, metropolis_chain, metropolis_eigenvalues,
    product_independent, product_single_site, product_subset, refresh_chain, simulate_trace,
    single_site_chain, sticky_refresh_chain, subset_chain, verify_eigen, CompositionChain,
    SingleBallChain, SubsetLaw,
};
use krawtchouk::comb::{
    big_to_rational, binomial, factorial, multinomial, rising_int, CompositionSpace,
    MultiIndexSet,
};
use krawtchouk::io::trace_line;
use krawtchouk::lancaster::{
    bivariate_from_correlations, bivariate_from_kernel, extract_correlations,
    hypergroup_triple_sum, linearization_distribution, linearization_identity_gap, mass_gap,
};
use krawtchouk::poly::{
    build_table, dual_orthogonality_gap, duality_gap, eval_q_gf, eval_q_hypergeometric,
    eval_q_symmetrized, eval_xu_k, PolynomialTable,
};
use krawtchouk::scalar::parse_rational;
use krawtchouk::{Exact, Scalar};
use num::{BigRational, One, Zero};

const CAP: u128 = 10_000_000;

fn rat(s: &str) -> BigRational {
    parse_rational(s).unwrap()
}

fn pv(parts: &[&str]) -> ProbabilityVector {
    ProbabilityVector::new(parts.iter().map(|s| rat(s)).collect()).unwrap()
}

/// Test probabilities per dimension, sorted nonincreasing, strictly positive.
fn base_p(d: usize) -> ProbabilityVector {
    match d {
        2 => pv(&["2/3", "1/3"]),
        3 => pv(&["1/2", "1/3", "1/6"]),
        4 => pv(&["2/5", "3/10", "1/5", "1/10"]),
        _ => panic!("no base point for d = {d}"),
    }
}

/// Distinct sorted rational probability vectors with strictly positive
/// entries: partitions of successive integers into exactly `d` parts,
/// normalized and deduplicated, until `want` points are collected.
fn sorted_simplex_points(d: usize, want: usize) -> Vec<ProbabilityVector> {
    fn partitions(m: u32, parts: usize, max_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            if m >= 1 && m <= max_part {
                prefix.push(m);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        let hi = max_part.min(m.saturating_sub(parts as u32 - 1));
        for v in (1..=hi).rev() {
            prefix.push(v);
            partitions(m - v, parts - 1, v, prefix, out);
            prefix.pop();
        }
    }
    let mut seen: BTreeSet<Vec<BigRational>> = BTreeSet::new();
    let mut points = Vec::new();
    let mut m = d as u32;
    while points.len() < want && m < 60 {
        let mut raw = Vec::new();
        partitions(m, d, m, &mut Vec::new(), &mut raw);
        for parts in raw {
            let total = BigRational::from_integer((m as i64).into());
            let p: Vec<BigRational> = parts
                .iter()
                .map(|&k| BigRational::from_integer((k as i64).into()) / &total)
                .collect();
            if seen.insert(p.clone()) {
                points.push(ProbabilityVector::new(p).unwrap());
                if points.len() == want {
                    break;
                }
            }
        }
        m += 1;
    }
    assert!(points.len() >= want, "d = {d}: only {} points", points.len());
    points
}

fn int_rat(k: i64) -> BigRational {
    BigRational::from_integer(k.into())
}

fn pow_ref<S: Scalar>(base: &S, k: u32) -> S {
    let mut acc = S::one();
    for _ in 0..k {
        acc = acc.mul_ref(base);
    }
    acc
}

/// Largest entrywise `|a - b|` between two kernels, as `f64`.
fn kernel_dev<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut dev: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (va, vb) in ra.iter().zip(rb) {
            dev = dev.max((va.clone() - vb.clone()).abs_f64());
        }
    }
    dev
}

fn vec_dev<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clone() - y.clone()).abs_f64())
        .fold(0.0, f64::max)
}

fn eigen_tables<S: Scalar>(
    chain: &CompositionChain<S>,
) -> (PolynomialTable<S>, PolynomialTable<S>) {
    let alpha = build_table(&chain.p, &chain.ball.eigen.alpha_basis(), chain.n_balls, CAP).unwrap();
    let beta = build_table(&chain.p, &chain.ball.eigen.beta_basis(), chain.n_balls, CAP).unwrap();
    (alpha, beta)
}

/// Lift versus the lumped product chain, plus the eigen residuals, at a
/// shared tolerance (zero for exact scalars).
fn check_against_lump<S: Scalar>(
    lift: &CompositionChain<S>,
    full: &[Vec<S>],
    ball: &SingleBallChain<S>,
    tol: f64,
) -> f64 {
    let d = ball.d();
    let lump = dynkin_lump(
        full,
        d,
        lift.n_balls,
        &ball.p,
        ball,
        lift.lambda.clone(),
        CAP,
    )
    .unwrap();
    let dev = kernel_dev(&lift.kernel, &lump.kernel);
    assert!(dev <= tol, "lift and lump disagree by {dev:.3e}");
    let (alpha, beta) = eigen_tables(lift);
    let rep = verify_eigen(lift, &alpha, &beta, tol);
    assert!(
        rep.ok && rep.max_right_residual <= tol && rep.max_left_residual <= tol,
        "eigen residuals {:.3e} / {:.3e} at {:?}",
        rep.max_right_residual,
        rep.max_left_residual,
        rep.worst_index
    );
    dev
}

#[test]
fn orthogonality_gram_matrices_are_diagonal_with_closed_form_norms() {
    let mut exact_cases: Vec<(ProbabilityVector, OrthoBasis<Exact>, String)> = Vec::new();
    for d in 2..=4 {
        let p = base_p(d);
        exact_cases.push((p.clone(), helmert(&p).unwrap(), format!("helmert d={d}")));
        exact_cases.push((p.clone(), xu(&p).unwrap(), format!("triangular d={d}")));
    }
    let (s3_p, s3_basis) = {
        let (t, sizes) = s3_table();
        character_basis::<Exact>(&t, &sizes).unwrap()
    };
    exact_cases.push((s3_p, s3_basis, "character d=3".into()));
    let (h4_p, h4_basis) = {
        let (t, sizes) = hadamard4_table();
        character_basis::<Exact>(&t, &sizes).unwrap()
    };
    exact_cases.push((h4_p, h4_basis, "character d=4".into()));

    for (p, basis, label) in &exact_cases {
        for n_balls in 1..=5 {
            let table = build_table(p, basis, n_balls, CAP).unwrap();
            let rep = table.orthogonality_report(0.0);
            assert!(
                rep.ok && rep.max_deviation == 0.0,
                "{label} N={n_balls}: exact Gram deviation {:.3e}",
                rep.max_deviation
            );
            // independent recomputation of the closed-form squared norms
            for r in 0..table.indices().len() {
                let n = table.indices().get(r);
                let total: u32 = n.iter().sum();
                let mut expect = Exact::from_rational(
                    &(big_to_rational(&binomial(n_balls as u64, total as u64))
                        * big_to_rational(&multinomial(n))),
                );
                for (l, &k) in n.iter().enumerate() {
                    expect = expect.mul_ref(&pow_ref(&basis.weights()[l + 1], k));
                }
                assert!(
                    (table.gram(r, r) - expect).is_zero_within(0.0),
                    "{label} N={n_balls}: diagonal Gram entry at {n:?} off the closed form"
                );
            }
        }
    }

    let mut float_dev: f64 = 0.0;
    let mut float_cases: Vec<(ProbabilityVector, OrthoBasis<f64>, String)> = Vec::new();
    for d in 2..=4 {
        let p = base_p(d);
        float_cases.push((p.clone(), helmert(&p).unwrap(), format!("helmert d={d}")));
        float_cases.push((p.clone(), xu(&p).unwrap(), format!("triangular d={d}")));
    }
    let (t, sizes) = s3_table();
    let (cp, cb) = character_basis::<f64>(&t, &sizes).unwrap();
    float_cases.push((cp, cb, "character d=3".into()));
    let (t, sizes) = hadamard4_table();
    let (cp, cb) = character_basis::<f64>(&t, &sizes).unwrap();
    float_cases.push((cp, cb, "character d=4".into()));
    for (p, basis, label) in &float_cases {
        for n_balls in 1..=5 {
            let table = build_table(p, basis, n_balls, CAP).unwrap();
            let rep = table.orthogonality_report(1e-10);
            assert!(
                rep.ok,
                "{label} N={n_balls}: float Gram deviation {:.3e}",
                rep.max_deviation
            );
            float_dev = float_dev.max(rep.max_deviation);
        }
    }
    println!(
        "PASS orthogonality: {} exact systems at deviation 0, float worst {float_dev:.2e}",
        exact_cases.len() * 5
    );
}

#[test]
fn three_polynomial_evaluators_agree_exactly() {
    let mut checked = 0usize;
    for d in 2..=3 {
        let p = base_p(d);
        let bases = [helmert::<Exact>(&p).unwrap(), xu::<Exact>(&p).unwrap()];
        for basis in &bases {
            for n_balls in 1..=5u32 {
                let states = CompositionSpace::new(d, n_balls, CAP).unwrap();
                let indices = MultiIndexSet::new(d - 1, n_balls, CAP).unwrap();
                for n in indices.iter() {
                    for x in states.iter() {
                        let gf = eval_q_gf(basis, x, n, CAP).unwrap();
                        let hyp = eval_q_hypergeometric(basis, x, n).unwrap();
                        let sym = eval_q_symmetrized(basis, x, n).unwrap();
                        assert!(
                            (gf.clone() - hyp).is_zero_within(0.0),
                            "series vs hypergeometric at d={d} N={n_balls} n={n:?} x={x:?}"
                        );
                        assert!(
                            (gf - sym).is_zero_within(0.0),
                            "series vs symmetrized at d={d} N={n_balls} n={n:?} x={x:?}"
                        );
                        checked += 1;
                    }
                }
            }
        }
    }
    println!("PASS evaluators: {checked} (n, x) pairs agree across all three definitions");
}

#[test]
fn conditional_binomial_identity_links_the_two_normalizations() {
    let mut checked = 0usize;
    for d in 2..=4 {
        let p = base_p(d);
        let basis = xu::<Exact>(&p).unwrap();
        for n_balls in 1..=4u32 {
            let table = build_table(&p, &basis, n_balls, CAP).unwrap();
            for r in 0..table.indices().len() {
                let n = table.indices().get(r);
                let total: u32 = n.iter().sum();
                let mut scale = Exact::from_rational(&rising_int(-(n_balls as i64), total))
                    .invert()
                    .unwrap();
                let mut head = BigRational::zero();
                for (j, &k) in n.iter().enumerate() {
                    let ratio = p.get(j).clone() / (BigRational::one() - &head);
                    let mut factor =
                        Exact::from_rational(&big_to_rational(&factorial(k)));
                    factor = factor.mul_ref(&pow_ref(&Exact::from_rational(&ratio), k));
                    scale = scale.mul_ref(&factor);
                    head += p.get(j);
                }
                for xi in 0..table.states().len() {
                    let x = table.states().get(xi);
                    let k_val = eval_xu_k(&p, x, n, n_balls).unwrap();
                    let q = table.value(r, xi);
                    assert!(
                        (Exact::from_rational(&k_val) - scale.mul_ref(q)).is_zero_within(0.0),
                        "identity fails at d={d} N={n_balls} n={n:?} x={x:?}"
                    );
                    checked += 1;
                }
            }
        }
    }
    println!("PASS conditional-binomial identity: {checked} evaluations match exactly");
}

#[test]
fn duality_and_dual_orthogonality_hold_exactly() {
    let mut systems: Vec<(ProbabilityVector, OrthoBasis<Exact>, String)> = Vec::new();
    for d in 2..=4 {
        let p = base_p(d);
        systems.push((p.clone(), helmert(&p).unwrap(), format!("helmert d={d}")));
    }
    let (t, sizes) = s3_table();
    let (cp, cb) = character_basis::<Exact>(&t, &sizes).unwrap();
    systems.push((cp, cb, "character d=3".into()));
    let (t, sizes) = hadamard4_table();
    let (cp, cb) = character_basis::<Exact>(&t, &sizes).unwrap();
    systems.push((cp, cb, "character d=4".into()));

    let mut checked = 0usize;
    for (p, basis, label) in &systems {
        let h = h_matrix(p, basis).unwrap();
        for n_balls in 1..=4 {
            let gap = duality_gap(&h, n_balls, CAP).unwrap();
            assert_eq!(gap, 0.0, "{label} N={n_balls}: duality gap {gap:.3e}");
            let dual = dual_orthogonality_gap(&h, n_balls, CAP).unwrap();
            assert_eq!(dual, 0.0, "{label} N={n_balls}: dual orthogonality gap {dual:.3e}");
            checked += 1;
        }
    }
    println!("PASS duality: {checked} systems self-dual with exactly orthogonal duals");
}

#[test]
fn hypergroup_positivity_coincides_with_strong_monotonicity_and_triple_products() {
    let mut holds = 0usize;
    let mut fails = 0usize;
    for d in 2..=5 {
        for p in sorted_simplex_points(d, 50) {
            let basis = helmert::<Exact>(&p).unwrap();
            let h = h_matrix(&p, &basis).unwrap();
            let hyper = hypergroup_check(&h, 0.0).unwrap().holds;
            let monotone = p.is_strongly_monotone();
            let gks = gks_check(&p, &basis, 0.0).holds;
            assert_eq!(
                hyper, monotone,
                "hypergroup vs monotonicity at p = {:?}",
                p.as_slice()
            );
            assert_eq!(
                hyper, gks,
                "hypergroup vs pairwise-sum check at p = {:?}",
                p.as_slice()
            );
            if hyper {
                holds += 1;
            } else {
                fails += 1;
            }
        }
    }
    assert!(holds > 0 && fails > 0, "sweep never exercised both outcomes");

    // scaled triple sums over compositions reproduce the base-level verdict
    let cases = [
        pv(&["2/3", "1/3"]),
        pv(&["1/2", "1/2"]),
        pv(&["1/2", "1/3", "1/6"]),
        pv(&["2/5", "7/20", "1/4"]),
    ];
    for p in &cases {
        let basis = helmert::<Exact>(p).unwrap();
        let h = h_matrix(p, &basis).unwrap();
        let base = hypergroup_check(&h, 0.0).unwrap().holds;
        for n_balls in 1..=3 {
            let table = build_table(p, &basis, n_balls, CAP).unwrap();
            let states = table.states();
            let mut all_nonneg = true;
            for x in states.iter() {
                for y in states.iter() {
                    for z in states.iter() {
                        let s = hypergroup_triple_sum(&table, x, y, z).unwrap();
                        if !s.is_nonneg_within(0.0) {
                            all_nonneg = false;
                        }
                    }
                }
            }
            assert_eq!(
                all_nonneg,
                base,
                "triple sums disagree with the base check at p = {:?}, N = {n_balls}",
                p.as_slice()
            );
        }
    }
    println!(
        "PASS hypergroup: {holds} positive and {fails} negative points agree across all three \
         criteria; composition-level triple sums match the base verdict"
    );
}

#[test]
fn metropolis_spectrum_formula_matches_eigensolves() {
    assert_eq!(
        metropolis_eigenvalues(&pv(&["2/3", "1/3"]))[1],
        rat("1/4"),
        "second eigenvalue at p = (2/3, 1/3)"
    );
    let mut checked = 0usize;
    for d in 2..=5 {
        for p in sorted_simplex_points(d, 20) {
            let formula = metropolis_eigenvalues(&p);
            let ball = metropolis_chain::<Exact>(&p).unwrap();
            for (l, rho) in ball.eigen.rho.iter().enumerate() {
                assert!(
                    (rho.clone() - Exact::from_rational(&formula[l])).is_zero_within(0.0),
                    "stored spectrum disagrees with the formula at p = {:?}",
                    p.as_slice()
                );
            }
            // exact eigensolve: rows of the eigen data diagonalize the kernel
            let rep = ball.validate(0.0);
            assert!(
                rep.ok,
                "exact eigen identity fails at p = {:?}: residual {:.3e}",
                p.as_slice(),
                rep.right_residual.max(rep.left_residual)
            );
            // independent numeric eigensolve of the symmetrized kernel
            let sym = nalgebra::DMatrix::from_fn(d, d, |i, j| {
                let pi = Scalar::to_f64(p.get(i));
                let pj = Scalar::to_f64(p.get(j));
                ball.kernel[i][j].to_f64() * (pi / pj).sqrt()
            });
            let mut numeric: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
            numeric.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut closed: Vec<f64> = formula.iter().map(Scalar::to_f64).collect();
            closed.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (a, b) in numeric.iter().zip(&closed) {
                assert!(
                    (a - b).abs() <= 1e-10,
                    "numeric eigensolve {a} vs formula {b} at p = {:?}",
                    p.as_slice()
                );
            }
            checked += 1;
        }
    }
    println!("PASS metropolis spectrum: formula confirmed on {checked} sorted points");
}

#[test]
fn composition_lifts_agree_with_product_chain_lumping_and_their_spectra() {
    // random-scan, all-coordinate, and subset refreshes of an exact kernel
    let p3 = base_p(3);
    let ball3 = metropolis_chain::<Exact>(&p3).unwrap();
    for n_balls in 2..=4u32 {
        let lift = single_site_chain(&ball3, n_balls, CAP).unwrap();
        let full = product_single_site(&ball3, n_balls).unwrap();
        check_against_lump(&lift, &full, &ball3, 0.0);
        for (i, n) in lift.indices.iter().enumerate() {
            let total: u32 = n.iter().sum();
            let mut acc = Exact::from_rational(&int_rat((n_balls - total) as i64));
            for (l, &k) in n.iter().enumerate() {
                acc = acc + Exact::from_rational(&int_rat(k as i64)).mul_ref(&ball3.eigen.rho[l + 1]);
            }
            let expect = acc.mul_ref(&Exact::from_rational(&int_rat(n_balls as i64)).invert().unwrap());
            assert!(
                (lift.lambda[i].clone() - expect).is_zero_within(0.0),
                "single-site eigenvalue formula at n = {n:?}"
            );
        }
    }
    for n_balls in 2..=4u32 {
        let lift = independent_all_chain(&ball3, n_balls, CAP).unwrap();
        let full = product_independent(&ball3, n_balls).unwrap();
        check_against_lump(&lift, &full, &ball3, 0.0);
        for (i, n) in lift.indices.iter().enumerate() {
            let mut expect = Exact::one();
            for (l, &k) in n.iter().enumerate() {
                expect = expect.mul_ref(&pow_ref(&ball3.eigen.rho[l + 1], k));
            }
            assert!(
                (lift.lambda[i].clone() - expect).is_zero_within(0.0),
                "product eigenvalue formula at n = {n:?}"
            );
        }
    }
    let mixed3 = SubsetLaw::new(vec![rat("1/6"), rat("1/3"), rat("1/3"), rat("1/6")]).unwrap();
    let lift = subset_chain(&ball3, 3, &mixed3, CAP).unwrap();
    let full = product_subset(&ball3, 3, &mixed3).unwrap();
    check_against_lump(&lift, &full, &ball3, 0.0);
    // subset refresh degenerates to the single-site and all-coordinate lifts
    let one = subset_chain(&ball3, 3, &SubsetLaw::point_mass(1, 3).unwrap(), CAP).unwrap();
    let site = single_site_chain(&ball3, 3, CAP).unwrap();
    assert_eq!(kernel_dev(&one.kernel, &site.kernel), 0.0);
    assert_eq!(vec_dev(&one.lambda, &site.lambda), 0.0);
    let all = subset_chain(&ball3, 3, &SubsetLaw::point_mass(3, 3).unwrap(), CAP).unwrap();
    let indep = independent_all_chain(&ball3, 3, CAP).unwrap();
    assert_eq!(kernel_dev(&all.kernel, &indep.kernel), 0.0);
    assert_eq!(vec_dev(&all.lambda, &indep.lambda), 0.0);

    // a two-category kernel lifted up to twelve coordinates
    let p2 = base_p(2);
    let ball2 = metropolis_chain::<Exact>(&p2).unwrap();
    let lift = single_site_chain(&ball2, 6, CAP).unwrap();
    let full = product_single_site(&ball2, 6).unwrap();
    check_against_lump(&lift, &full, &ball2, 0.0);
    let mut law6 = vec![BigRational::zero(); 7];
    law6[1] = rat("1/2");
    law6[2] = rat("1/4");
    law6[6] = rat("1/4");
    let law6 = SubsetLaw::new(law6).unwrap();
    let lift = subset_chain(&ball2, 6, &law6, CAP).unwrap();
    let full = product_subset(&ball2, 6, &law6).unwrap();
    check_against_lump(&lift, &full, &ball2, 0.0);
    let lift = independent_all_chain(&ball2, 4, CAP).unwrap();
    let full = product_independent(&ball2, 4).unwrap();
    check_against_lump(&lift, &full, &ball2, 0.0);

    // urn refreshes with a four-category stationary law
    let p4 = base_p(4);
    let ball4 = refresh_chain(&p4, &helmert::<Exact>(&p4).unwrap()).unwrap();
    for k in 1..=3u32 {
        let lift = ehrenfest_chain(&ball4, 3, k, CAP).unwrap();
        let full = product_subset(&ball4, 3, &SubsetLaw::point_mass(k, 3).unwrap()).unwrap();
        check_against_lump(&lift, &full, &ball4, 0.0);
    }
    let lift = single_site_chain(&ball4, 3, CAP).unwrap();
    let full = product_single_site(&ball4, 3).unwrap();
    check_against_lump(&lift, &full, &ball4, 0.0);

    // lamp flips
    for (n_balls, k) in [(4u32, 1u32), (4, 2), (4, 4), (6, 2)] {
        let lift = lightbulb_chain::<Exact>(n_balls, k, CAP).unwrap();
        let full = product_subset(
            &lift.ball,
            n_balls,
            &SubsetLaw::point_mass(k, n_balls).unwrap(),
        )
        .unwrap();
        check_against_lump(&lift, &full, &lift.ball.clone(), 0.0);
    }
    let bulbs = lightbulb_chain::<Exact>(4, 2, CAP).unwrap();
    let spectrum: Vec<BigRational> = ["1", "0", "-1/3", "0", "1"].iter().map(|s| rat(s)).collect();
    for (l, want) in spectrum.iter().enumerate() {
        assert!(
            (bulbs.lambda[l].clone() - Exact::from_rational(want)).is_zero_within(0.0),
            "lamp spectrum entry {l}"
        );
    }

    // urn of distinct correlation points, plus the degenerate identity:
    // identical points collapse to the all-coordinate lift
    let pu = pv(&["1/2", "1/2"]);
    let u = helmert::<Exact>(&pu).unwrap();
    let urn = lancaster_urn_chain::<Exact>(
        &[vec![Exact::from_rational(&rat("1/2"))], vec![Exact::from_rational(&rat("-1/2"))]],
        &u,
        &pu,
        CAP,
    )
    .unwrap();
    for (l, want) in ["1", "0", "-1/4"].iter().enumerate() {
        assert!(
            (urn.lambda[l].clone() - Exact::from_rational(&rat(want))).is_zero_within(0.0),
            "urn spectrum entry {l}"
        );
    }
    let (alpha, beta) = eigen_tables(&urn);
    let rep = verify_eigen(&urn, &alpha, &beta, 0.0);
    assert!(rep.ok && rep.max_right_residual == 0.0 && rep.max_left_residual == 0.0);
    let third = vec![Exact::from_rational(&rat("1/3"))];
    let same = lancaster_urn_chain::<Exact>(&[third.clone(), third.clone()], &u, &pu, CAP).unwrap();
    let ball = lancaster_kernel(&[Exact::from_rational(&rat("1/3"))], &u, &pu, 0.0)
        .unwrap()
        .0;
    let indep = independent_all_chain(&ball, 2, CAP).unwrap();
    assert_eq!(kernel_dev(&same.kernel, &indep.kernel), 0.0);
    assert_eq!(vec_dev(&same.lambda, &indep.lambda), 0.0);

    // floating kernel with unequal holding probabilities
    let sticky = sticky_refresh_chain(
        &[rat("1/2"), rat("1/3"), rat("1/4")],
        &pv(&["1/2", "1/3", "1/6"]),
    )
    .unwrap();
    let lift = single_site_chain(&sticky, 2, CAP).unwrap();
    let full = product_single_site(&sticky, 2).unwrap();
    let dev = check_against_lump(&lift, &full, &sticky, 1e-10);
    let lift2 = independent_all_chain(&sticky, 2, CAP).unwrap();
    let full2 = product_independent(&sticky, 2).unwrap();
    let dev2 = check_against_lump(&lift2, &full2, &sticky, 1e-10);

    // cyclic shift kernel with a complex spectrum
    let walk = circulant_chain(&[rat("0"), rat("1/2"), rat("1/2")]).unwrap();
    assert!(
        (walk.eigen.rho[1] - num::complex::Complex64::new(-0.5, 0.0)).is_zero_within(1e-12),
        "two-neighbor walk frequency"
    );
    let mut cdev: f64 = 0.0;
    for n_balls in 2..=3u32 {
        let lift = single_site_chain(&walk, n_balls, CAP).unwrap();
        let full = product_single_site(&walk, n_balls).unwrap();
        cdev = cdev.max(check_against_lump(&lift, &full, &walk, 1e-10));
        if n_balls == 2 {
            let idx = lift.indices.index_of(&[1, 0]).unwrap();
            assert!(
                (lift.lambda[idx] - num::complex::Complex64::new(0.25, 0.0))
                    .is_zero_within(1e-12),
                "lifted cyclic eigenvalue at (1, 0)"
            );
        }
    }
    let lift = independent_all_chain(&walk, 2, CAP).unwrap();
    let full = product_independent(&walk, 2).unwrap();
    cdev = cdev.max(check_against_lump(&lift, &full, &walk, 1e-10));

    println!(
        "PASS composition lifts: exact constructors equal the lumping oracle at deviation 0; \
         floating kernels within {:.2e}",
        dev.max(dev2).max(cdev)
    );
}

#[test]
fn lancaster_correlations_round_trip_and_match_chain_spectra() {
    // correlations survive a build-then-extract round trip untouched
    let mut round_trips = 0usize;
    for d in 2..=3 {
        let p = base_p(d);
        let basis = helmert::<Exact>(&p).unwrap();
        for n_balls in 1..=3 {
            let table = build_table(&p, &basis, n_balls, CAP).unwrap();
            let mut assigned = BTreeMap::new();
            let mut want = vec![Exact::one()];
            for r in 1..table.indices().len() {
                let sign = if r % 2 == 0 { 1 } else { -1 };
                let value = Exact::from_rational(&BigRational::new(
                    sign.into(),
                    ((r + 2) as i64).into(),
                ));
                assigned.insert(table.indices().get(r).to_vec(), value.clone());
                want.push(value);
            }
            let (joint, _) = bivariate_from_correlations(&assigned, &table, 0.0).unwrap();
            assert_eq!(joint.total_gap(), 0.0);
            assert_eq!(joint.margin_gap(&table), 0.0);
            let rep = extract_correlations(&joint, &table, 0.0).unwrap();
            assert_eq!(rep.max_cross, 0.0, "cross terms at d={d} N={n_balls}");
            assert_eq!(vec_dev(&rep.rho, &want), 0.0, "d={d} N={n_balls}");
            round_trips += 1;
        }
    }

    // one-step joint laws of reversible chains carry the chain spectrum
    let p3 = base_p(3);
    let ball = metropolis_chain::<Exact>(&p3).unwrap();
    let chains = [
        single_site_chain(&ball, 2, CAP).unwrap(),
        lightbulb_chain::<Exact>(4, 2, CAP).unwrap(),
        lancaster_urn_chain::<Exact>(
            &[
                vec![Exact::from_rational(&rat("1/2"))],
                vec![Exact::from_rational(&rat("-1/2"))],
            ],
            &helmert(&pv(&["1/2", "1/2"])).unwrap(),
            &pv(&["1/2", "1/2"]),
            CAP,
        )
        .unwrap(),
    ];
    for chain in &chains {
        let (alpha, _) = eigen_tables(chain);
        let joint = bivariate_from_kernel(chain, &alpha, 0.0).unwrap();
        assert_eq!(joint.total_gap(), 0.0);
        assert_eq!(joint.margin_gap(&alpha), 0.0);
        assert_eq!(
            vec_dev(&joint.rho, &chain.lambda),
            0.0,
            "joint correlations differ from the spectrum"
        );
    }
    println!(
        "PASS lancaster: {round_trips} round trips exact; one-step joints of {} chains carry \
         multinomial margins and the chain spectrum",
        chains.len()
    );
}

#[test]
fn linearization_laws_are_probability_distributions_splitting_products() {
    let started = Instant::now();
    let cases = [
        pv(&["2/3", "1/3"]),
        pv(&["1/2", "1/2"]),
        pv(&["1/2", "1/3", "1/6"]),
        pv(&["1/2", "1/4", "1/4"]),
    ];
    let mut pairs = 0usize;
    for p in &cases {
        let basis = helmert::<Exact>(p).unwrap();
        let h = h_matrix(p, &basis).unwrap();
        assert!(
            hypergroup_check(&h, 0.0).unwrap().holds,
            "base positivity must hold at p = {:?}",
            p.as_slice()
        );
        for n_balls in 1..=3 {
            let table = build_table(p, &basis, n_balls, CAP).unwrap();
            let states = table.states();
            for xi in 0..states.len() {
                for yi in xi..states.len() {
                    let x = states.get(xi);
                    let y = states.get(yi);
                    let phi = linearization_distribution(&table, x, y, 0.0).unwrap();
                    for (zi, mass) in phi.iter().enumerate() {
                        assert!(
                            mass.is_nonneg_within(0.0),
                            "negative mass at z = {:?} for x = {x:?}, y = {y:?}",
                            states.get(zi)
                        );
                    }
                    assert_eq!(mass_gap(&phi), 0.0);
                    assert_eq!(
                        linearization_identity_gap(&table, x, y, &phi).unwrap(),
                        0.0,
                        "product expansion fails at x = {x:?}, y = {y:?}"
                    );
                    pairs += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "PASS linearization: {pairs} state pairs produce exact probability laws in {elapsed:?}"
    );
}

#[test]
fn seeded_simulation_is_reproducible_and_close_to_stationarity() {
    let chain = lightbulb_chain::<f64>(4, 1, CAP).unwrap();
    let steps = 1_000_000u64;
    let run = |seed: u64| {
        let mut trace = String::with_capacity(48 * steps as usize / 10 * 10);
        let report = simulate_trace(&chain, &[4, 0], steps, seed, |step, state| {
            trace.push_str(&trace_line(step, state));
            trace.push('\n');
        })
        .unwrap();
        (trace, report)
    };
    let (trace_a, report_a) = run(7);
    let (trace_b, report_b) = run(7);
    assert!(trace_a == trace_b, "same-seed traces diverged");
    assert_eq!(report_a.occupation, report_b.occupation);
    assert_eq!(report_a.final_state, report_b.final_state);
    assert!(
        report_a.tv_to_stationary <= 0.01,
        "total variation {:.4} above 0.01",
        report_a.tv_to_stationary
    );
    let (trace_c, _) = run(8);
    assert!(trace_a != trace_c, "different seeds produced identical traces");
    println!(
        "PASS simulation: {} identical bytes per seeded trace, total variation {:.2e}",
        trace_a.len(),
        report_a.tv_to_stationary
    );
}
