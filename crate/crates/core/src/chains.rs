//! Markov chains diagonalized by the polynomial family: single-ball kernels
//! with explicit eigen-data, their lifts to composition space (move one
//! ball, move all balls, refresh a random subset), the product-space lumping
//! oracle that every lift is checked against, and seeded simulation.

use std::collections::BTreeMap;

use num::{BigRational, One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{helmert, OrthoBasis, PositivityReport, ProbabilityVector};
use crate::comb::{big_to_rational, binomial, multinomial, multinomial_pmf, CompositionSpace, MultiIndexSet};
use crate::error::{Error, Result};
use crate::poly::PolynomialTable;
use crate::scalar::{pow_u32, Scalar};

/// Spectral data for a `d`-state kernel: right eigenfunctions `α⁽ᵏ⁾`, left
/// weight functions `β⁽ᵏ⁾` (the left eigenvectors are `pᵢ βᵢ⁽ᵏ⁾`), and
/// eigenvalues `ρₖ`, with `ρ₀ = 1` and `α⁽⁰⁾ = β⁽⁰⁾ ≡ 1`. The families are
/// biorthogonal: `Σᵢ pᵢ αᵢ⁽ᵏ⁾ βᵢ⁽ˡ⁾ = δₖₗ`; reversible kernels have
/// `α = β` = an orthonormal basis.
#[derive(Clone, Debug)]
pub struct EigenSystem<S> {
    pub alpha: Vec<Vec<S>>,
    pub beta: Vec<Vec<S>>,
    pub rho: Vec<S>,
}

impl<S: Scalar> EigenSystem<S> {
    pub fn alpha_basis(&self) -> OrthoBasis<S> {
        OrthoBasis::from_rows(self.alpha.clone(), vec![S::one(); self.alpha.len()])
    }

    pub fn beta_basis(&self) -> OrthoBasis<S> {
        OrthoBasis::from_rows(self.beta.clone(), vec![S::one(); self.beta.len()])
    }
}

/// A row-stochastic kernel on the `d` categories with stationary law `p`
/// and attached eigen-data.
#[derive(Clone, Debug)]
pub struct SingleBallChain<S> {
    pub kernel: Vec<Vec<S>>,
    pub p: ProbabilityVector,
    pub eigen: EigenSystem<S>,
}

/// Health report for a single-ball chain: structural checks plus the worst
/// residuals of the claimed spectral data.
#[derive(Clone, Debug)]
pub struct SingleBallReport {
    pub ok: bool,
    pub row_sum_dev: f64,
    pub min_entry: f64,
    pub stationarity_dev: f64,
    pub biorthogonality_dev: f64,
    pub right_residual: f64,
    pub left_residual: f64,
}

impl<S: Scalar> SingleBallChain<S> {
    pub fn d(&self) -> usize {
        self.kernel.len()
    }

    pub fn validate(&self, tol: f64) -> SingleBallReport {
        let d = self.d();
        let ps: Vec<S> = self.p.to_scalars();
        let mut row_sum_dev: f64 = 0.0;
        let mut min_entry = f64::INFINITY;
        for row in &self.kernel {
            let mut acc = S::zero();
            for v in row {
                acc = acc + v.clone();
                min_entry = min_entry.min(v.to_f64());
            }
            row_sum_dev = row_sum_dev.max((acc - S::one()).abs_f64());
        }
        let mut stationarity_dev: f64 = 0.0;
        for j in 0..d {
            let mut acc = S::zero();
            for i in 0..d {
                acc = acc + ps[i].mul_ref(&self.kernel[i][j]);
            }
            stationarity_dev = stationarity_dev.max((acc - ps[j].clone()).abs_f64());
        }
        let mut biorthogonality_dev: f64 = 0.0;
        for k in 0..d {
            for l in 0..d {
                let mut acc = S::zero();
                for i in 0..d {
                    acc = acc + ps[i]
                        .mul_ref(&self.eigen.alpha[k][i])
                        .mul_ref(&self.eigen.beta[l][i]);
                }
                if k == l {
                    acc = acc - S::one();
                }
                biorthogonality_dev = biorthogonality_dev.max(acc.abs_f64());
            }
        }
        let mut right_residual: f64 = 0.0;
        let mut left_residual: f64 = 0.0;
        for k in 0..d {
            for i in 0..d {
                let mut acc = S::zero();
                for j in 0..d {
                    acc = acc + self.kernel[i][j].mul_ref(&self.eigen.alpha[k][j]);
                }
                acc = acc - self.eigen.rho[k].mul_ref(&self.eigen.alpha[k][i]);
                right_residual = right_residual.max(acc.abs_f64());
            }
            for j in 0..d {
                let mut acc = S::zero();
                for i in 0..d {
                    acc = acc + ps[i]
                        .mul_ref(&self.eigen.beta[k][i])
                        .mul_ref(&self.kernel[i][j]);
                }
                acc = acc - self.eigen.rho[k].mul_ref(&ps[j]).mul_ref(&self.eigen.beta[k][j]);
                left_residual = left_residual.max(acc.abs_f64());
            }
        }
        let ok = row_sum_dev <= tol
            && min_entry >= -tol
            && stationarity_dev <= tol
            && biorthogonality_dev <= tol
            && right_residual <= tol
            && left_residual <= tol;
        SingleBallReport {
            ok,
            row_sum_dev,
            min_entry,
            stationarity_dev,
            biorthogonality_dev,
            right_residual,
            left_residual,
        }
    }
}

/// Closed-form eigenvalues of the random-scan Metropolis chain, aligned with
/// the rows of [`helmert`] (entry 0 is the trivial eigenvalue 1). The
/// eigenfunction supported on the last `k+1` categories (display row `l`,
/// suffix contrast starting at category `d-l`) has eigenvalue
/// `(1/d) Σ_{j>r} (1 - pⱼ/p_r)` with `r = d-l`: the averaged rejection
/// probability of proposals out of category `r`.
pub fn metropolis_eigenvalues(p: &ProbabilityVector) -> Vec<BigRational> {
    let d = p.d();
    let dr = BigRational::from_integer((d as i64).into());
    let mut out = vec![BigRational::one()];
    for l in 1..d {
        let r = d - l - 1; // 0-based diagonal position of display row l
        let mut acc = BigRational::zero();
        for j in (r + 1)..d {
            acc += BigRational::one() - p.get(j) / p.get(r);
        }
        out.push(acc / &dr);
    }
    out
}

/// Random-scan Metropolis chain for a target `p` sorted in nonincreasing
/// order: propose a uniform category, accept with probability
/// `min(1, pⱼ/pᵢ)`. Right eigenfunctions are the Helmert rows; the
/// eigenvalues come from [`metropolis_eigenvalues`].
pub fn metropolis_chain<S: Scalar>(p: &ProbabilityVector) -> Result<SingleBallChain<S>> {
    if !p.is_sorted_descending() {
        return Err(Error::Precondition(
            "Metropolis construction needs p sorted in nonincreasing order".into(),
        ));
    }
    let d = p.d();
    let dr = BigRational::from_integer((d as i64).into());
    let mut kernel = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = vec![BigRational::zero(); d];
        let mut off_total = BigRational::zero();
        for j in 0..d {
            if j == i {
                continue;
            }
            let ratio = p.get(j) / p.get(i);
            let accept = if ratio >= BigRational::one() {
                BigRational::one()
            } else {
                ratio
            };
            row[j] = accept / &dr;
            off_total += &row[j];
        }
        row[i] = BigRational::one() - off_total;
        kernel.push(row.iter().map(|v| S::from_rational(v)).collect());
    }
    let basis: OrthoBasis<S> = helmert(p)?;
    let rho = metropolis_eigenvalues(p)
        .iter()
        .map(|v| S::from_rational(v))
        .collect();
    let rows = basis.rows().to_vec();
    Ok(SingleBallChain {
        kernel,
        p: p.clone(),
        eigen: EigenSystem {
            alpha: rows.clone(),
            beta: rows,
            rho,
        },
    })
}

/// The kernel `K_β(i,j) = pⱼ (1 + Σₗ βₗ u⁽ˡ⁾ᵢ u⁽ˡ⁾ⱼ)` attached to a point of
/// the correlation polytope, for an orthonormal basis `u`. Rows always sum
/// to one and `p` is always stationary; membership of `β` in the polytope is
/// exactly nonnegativity of the entries, returned as a report rather than an
/// error.
pub fn lancaster_kernel<S: Scalar>(
    beta: &[S],
    u: &OrthoBasis<S>,
    p: &ProbabilityVector,
    tol: f64,
) -> Result<(SingleBallChain<S>, PositivityReport)> {
    let d = p.d();
    if beta.len() != d - 1 || u.d() != d {
        return Err(Error::Dimension("β must have d-1 entries".into()));
    }
    let ps: Vec<S> = p.to_scalars();
    let mut kernel = Vec::with_capacity(d);
    let mut values = Vec::new();
    for i in 0..d {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let mut acc = S::one();
            for l in 1..d {
                acc = acc + beta[l - 1]
                    .mul_ref(&u.row(l)[i])
                    .mul_ref(&u.row(l)[j]);
            }
            let v = acc.mul_ref(&ps[j]);
            values.push(((i + 1, j + 1, 1), v.clone()));
            row.push(v);
        }
        kernel.push(row);
    }
    let membership = PositivityReport::collect(values, tol);
    let mut rho = vec![S::one()];
    rho.extend(beta.iter().cloned());
    let rows = u.rows().to_vec();
    Ok((
        SingleBallChain {
            kernel,
            p: p.clone(),
            eigen: EigenSystem {
                alpha: rows.clone(),
                beta: rows,
                rho,
            },
        },
        membership,
    ))
}

/// Candidate extreme points of the correlation polytope when the hypergroup
/// property holds with distinguished state `i0` (1-based): for each state
/// `j`, the point `βₗ = u⁽ˡ⁾ⱼ / u⁽ˡ⁾ᵢ₀`. Each candidate is checked for
/// membership; the flags are returned alongside.
pub fn lancaster_extreme_candidates<S: Scalar>(
    u: &OrthoBasis<S>,
    p: &ProbabilityVector,
    i0: usize,
    tol: f64,
) -> Result<Vec<(Vec<S>, bool)>> {
    let d = p.d();
    if i0 == 0 || i0 > d {
        return Err(Error::Dimension("i0 must be a 1-based state index".into()));
    }
    let h = crate::basis::h_matrix(p, u)?;
    let hyper = crate::basis::hypergroup_check_at(&h, i0, tol)?;
    if !hyper.holds {
        return Err(Error::Precondition(format!(
            "hypergroup property fails at state {i0}: triple {:?} gives {}",
            hyper.witness, hyper.min_display
        )));
    }
    let mut inv = Vec::with_capacity(d - 1);
    for l in 1..d {
        inv.push(u.row(l)[i0 - 1].invert().map_err(|_| {
            Error::Precondition(format!("u^({l}) vanishes at state {i0}"))
        })?);
    }
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let beta: Vec<S> = (1..d)
            .map(|l| u.row(l)[j].mul_ref(&inv[l - 1]))
            .collect();
        let (_, membership) = lancaster_kernel(&beta, u, p, tol)?;
        out.push((beta, membership.holds));
    }
    Ok(out)
}

/// Pure refresh: `K(i,j) = pⱼ` regardless of `i`, eigenvalues `(1, 0, …, 0)`.
pub fn refresh_chain<S: Scalar>(
    p: &ProbabilityVector,
    u: &OrthoBasis<S>,
) -> Result<SingleBallChain<S>> {
    let beta = vec![S::zero(); p.d() - 1];
    Ok(lancaster_kernel(&beta, u, p, 0.0)?.0)
}

/// Two-state deterministic flip, stationary uniform, eigenvalues `(1, -1)`.
pub fn flip_chain<S: Scalar>() -> SingleBallChain<S> {
    let p = ProbabilityVector::uniform(2);
    let kernel = vec![
        vec![S::zero(), S::one()],
        vec![S::one(), S::zero()],
    ];
    let rows = vec![
        vec![S::one(), S::one()],
        vec![S::from_int(-1), S::one()],
    ];
    SingleBallChain {
        kernel,
        p,
        eigen: EigenSystem {
            alpha: rows.clone(),
            beta: rows,
            rho: vec![S::one(), S::from_int(-1)],
        },
    }
}

/// The sticky-refresh kernel `K(i,j) = αᵢ δᵢⱼ + (1-αᵢ) θⱼ`: stay put with
/// probability `αᵢ`, otherwise draw fresh from `θ`. Stationary law
/// `pᵢ ∝ θᵢ/(1-αᵢ)`; reversible; eigen-data from a symmetrized dense solve.
pub fn sticky_refresh_chain(
    alphas: &[BigRational],
    theta: &ProbabilityVector,
) -> Result<SingleBallChain<f64>> {
    let d = theta.d();
    if alphas.len() != d {
        return Err(Error::Dimension("need one retention weight per state".into()));
    }
    if alphas
        .iter()
        .any(|a| a.is_negative() || *a >= BigRational::one())
    {
        return Err(Error::Probability(
            "retention weights must lie in [0, 1)".into(),
        ));
    }
    let mut weights = Vec::with_capacity(d);
    let mut total = BigRational::zero();
    for i in 0..d {
        let w = theta.get(i) / (BigRational::one() - &alphas[i]);
        total += &w;
        weights.push(w);
    }
    let p = ProbabilityVector::new(weights.iter().map(|w| w / &total).collect())?;
    let mut kernel = vec![vec![0.0f64; d]; d];
    for i in 0..d {
        let a = f64::from_rational(&alphas[i]);
        for j in 0..d {
            kernel[i][j] = (1.0 - a) * f64::from_rational(theta.get(j));
            if i == j {
                kernel[i][j] += a;
            }
        }
    }
    let ps: Vec<f64> = p.to_scalars();
    let sym = nalgebra::DMatrix::from_fn(d, d, |i, j| {
        ps[i].sqrt() * kernel[i][j] / ps[j].sqrt()
    });
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut alpha_rows = Vec::with_capacity(d);
    let mut rho = Vec::with_capacity(d);
    for (slot, &k) in order.iter().enumerate() {
        rho.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        let mut row: Vec<f64> = (0..d).map(|i| col[i] / ps[i].sqrt()).collect();
        let norm = if slot == 0 {
            // the top eigenvector is ±√p; pin the trivial row to exactly one
            row[0]
        } else {
            *row.iter().find(|v| v.abs() > 1e-9).unwrap_or(&1.0)
        };
        let scale = if slot == 0 { 1.0 / norm } else { norm.signum() };
        for v in row.iter_mut() {
            *v *= scale;
        }
        alpha_rows.push(row);
    }
    rho[0] = 1.0;
    Ok(SingleBallChain {
        kernel,
        p,
        eigen: EigenSystem {
            alpha: alpha_rows.clone(),
            beta: alpha_rows,
            rho,
        },
    })
}

/// Cyclic walk on `d` states: from `a`, step to `a + r (mod d)` with
/// probability `q[r]`. Stationary uniform; eigenvalues are the DFT of `q`
/// with Fourier-character eigenfunctions (right characters, conjugate left);
/// non-symmetric `q` gives a non-reversible chain with complex spectrum.
pub fn circulant_chain(q: &[BigRational]) -> Result<SingleBallChain<num::complex::Complex64>> {
    use num::complex::Complex64;
    let d = q.len();
    if d < 2 {
        return Err(Error::Dimension("need at least two states".into()));
    }
    if q.iter().any(|v| v.is_negative()) || q.iter().cloned().sum::<BigRational>() != BigRational::one()
    {
        return Err(Error::Probability(
            "step law must be a probability vector".into(),
        ));
    }
    let p = ProbabilityVector::uniform(d);
    let qf: Vec<f64> = q.iter().map(f64::from_rational).collect();
    let mut kernel = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    for a in 0..d {
        for r in 0..d {
            kernel[a][(a + r) % d] = Complex64::new(qf[r], 0.0);
        }
    }
    let tau = std::f64::consts::TAU;
    let omega = |k: usize| Complex64::from_polar(1.0, tau * k as f64 / d as f64);
    let mut alpha = Vec::with_capacity(d);
    let mut beta = Vec::with_capacity(d);
    let mut rho = Vec::with_capacity(d);
    for l in 0..d {
        alpha.push((0..d).map(|a| omega((l * a) % d)).collect::<Vec<_>>());
        beta.push((0..d).map(|a| omega((l * a) % d).conj()).collect::<Vec<_>>());
        let mut eta = Complex64::new(0.0, 0.0);
        for r in 0..d {
            eta += omega((l * r) % d) * qf[r];
        }
        rho.push(eta);
    }
    rho[0] = Complex64::new(1.0, 0.0);
    Ok(SingleBallChain {
        kernel,
        p,
        eigen: EigenSystem { alpha, beta, rho },
    })
}

/// An exchangeable law over refreshed-subset sizes `0..=N`.
#[derive(Clone, Debug)]
pub struct SubsetLaw {
    probs: Vec<BigRational>,
}

impl SubsetLaw {
    pub fn new(probs: Vec<BigRational>) -> Result<Self> {
        if probs.iter().any(|v| v.is_negative()) {
            return Err(Error::Probability("subset law has negative mass".into()));
        }
        if probs.iter().cloned().sum::<BigRational>() != BigRational::one() {
            return Err(Error::Probability("subset law must sum to one".into()));
        }
        Ok(SubsetLaw { probs })
    }

    pub fn point_mass(k: u32, n_balls: u32) -> Result<Self> {
        if k > n_balls {
            return Err(Error::Dimension("subset size exceeds ball count".into()));
        }
        let mut probs = vec![BigRational::zero(); n_balls as usize + 1];
        probs[k as usize] = BigRational::one();
        Ok(SubsetLaw { probs })
    }

    pub fn max_size(&self) -> u32 {
        self.probs.len() as u32 - 1
    }

    pub fn prob(&self, k: u32) -> &BigRational {
        &self.probs[k as usize]
    }
}

/// A row-stochastic kernel on the compositions of `N` over `d` boxes,
/// multinomially stationary, carrying the eigenvalue attached to each
/// polynomial index and the single-ball chain it was lifted from.
#[derive(Clone, Debug)]
pub struct CompositionChain<S> {
    pub states: CompositionSpace,
    pub indices: MultiIndexSet,
    pub kernel: Vec<Vec<S>>,
    pub lambda: Vec<S>,
    pub p: ProbabilityVector,
    pub n_balls: u32,
    pub ball: SingleBallChain<S>,
}

impl<S: Scalar> CompositionChain<S> {
    /// Worst deviation of row sums from one and of entries from
    /// nonnegativity, as `(row_sum_dev, min_entry)`.
    pub fn stochasticity(&self) -> (f64, f64) {
        let mut row_dev: f64 = 0.0;
        let mut min_entry = f64::INFINITY;
        for row in &self.kernel {
            let mut acc = S::zero();
            for v in row {
                acc = acc + v.clone();
                min_entry = min_entry.min(v.to_f64());
            }
            row_dev = row_dev.max((acc - S::one()).abs_f64());
        }
        (row_dev, min_entry)
    }

    /// Worst deviation of `m(·,p)ᵀ K` from `m(·,p)ᵀ`.
    pub fn stationarity_gap(&self) -> f64 {
        let m: Vec<S> = self
            .states
            .iter()
            .map(|x| S::from_rational(&multinomial_pmf(x, self.p.as_slice())))
            .collect();
        let mut dev: f64 = 0.0;
        for y in 0..self.states.len() {
            let mut acc = S::zero();
            for x in 0..self.states.len() {
                acc = acc + m[x].mul_ref(&self.kernel[x][y]);
            }
            dev = dev.max((acc - m[y].clone()).abs_f64());
        }
        dev
    }

    /// Worst deviation of detailed balance `m(x) K(x,y) = m(y) K(y,x)`.
    pub fn reversibility_gap(&self) -> f64 {
        let m: Vec<S> = self
            .states
            .iter()
            .map(|x| S::from_rational(&multinomial_pmf(x, self.p.as_slice())))
            .collect();
        let mut dev: f64 = 0.0;
        for x in 0..self.states.len() {
            for y in (x + 1)..self.states.len() {
                let fwd = m[x].mul_ref(&self.kernel[x][y]);
                let bwd = m[y].mul_ref(&self.kernel[y][x]);
                dev = dev.max((fwd - bwd).abs_f64());
            }
        }
        dev
    }

    /// Largest imaginary residue across kernel entries (complex backends
    /// assemble real kernels up to rounding): `√(|v|² - Re(v)²)`.
    pub fn imaginary_residue(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for row in &self.kernel {
            for v in row {
                let modulus = v.abs_f64();
                let re = v.to_f64();
                dev = dev.max((modulus * modulus - re * re).max(0.0).sqrt());
            }
        }
        dev
    }
}

fn lambda_single_site<S: Scalar>(rho: &[S], n: &[u32], n_balls: u32) -> S {
    let total: u32 = n.iter().sum();
    let mut acc = S::from_int((n_balls - total) as i64);
    for (l, &k) in n.iter().enumerate() {
        acc = acc + rho[l + 1].mul_ref(&S::from_int(k as i64));
    }
    let inv_n = S::from_rational(&BigRational::new(1.into(), (n_balls as i64).into()));
    acc.mul_ref(&inv_n)
}

fn lambda_independent<S: Scalar>(rho: &[S], n: &[u32]) -> S {
    let mut acc = S::one();
    for (l, &k) in n.iter().enumerate() {
        acc = acc.mul_ref(&pow_u32(&rho[l + 1], k));
    }
    acc
}

/// Subset-refresh eigenvalue: average over the hypergeometric split of the
/// `k` refreshed slots across the `n₀, n₁, …` slot classes of `∏ ρₗ^{jₗ}`.
fn lambda_subset<S: Scalar>(rho: &[S], n: &[u32], n_balls: u32, law: &SubsetLaw) -> S {
    let total: u32 = n.iter().sum();
    let n0 = n_balls - total;
    let mut acc = S::zero();
    for k in 0..=law.max_size() {
        if law.prob(k).is_zero() {
            continue;
        }
        let denom = big_to_rational(&binomial(n_balls as u64, k as u64));
        let mut inner = S::zero();
        // enumerate j over products of ranges 0..=n_l with |j| ≤ k and
        // j0 = k - |j| ≤ n0
        let parts = n.len();
        let mut j = vec![0u32; parts];
        loop {
            let used: u32 = j.iter().sum();
            if used <= k && k - used <= n0 {
                let j0 = k - used;
                let mut weight = big_to_rational(&binomial(n0 as u64, j0 as u64));
                for (l, &jl) in j.iter().enumerate() {
                    weight *= big_to_rational(&binomial(n[l] as u64, jl as u64));
                }
                weight /= &denom;
                let mut term = S::from_rational(&weight);
                for (l, &jl) in j.iter().enumerate() {
                    term = term.mul_ref(&pow_u32(&rho[l + 1], jl));
                }
                inner = inner + term;
            }
            // odometer over j
            let mut pos = 0;
            loop {
                if pos == parts {
                    break;
                }
                if j[pos] < n[pos] {
                    j[pos] += 1;
                    break;
                }
                j[pos] = 0;
                pos += 1;
            }
            if pos == parts {
                break;
            }
        }
        acc = acc + inner.mul_ref(&S::from_rational(law.prob(k)));
    }
    acc
}

/// Distribution of the landing boxes when the balls counted by `s` each move
/// independently by the single-ball kernel: a map from landing compositions
/// (of `|s|`) to probabilities.
fn move_distribution<S: Scalar>(
    kernel: &[Vec<S>],
    s: &[u32],
    capacity: u128,
) -> Result<BTreeMap<Vec<u32>, S>> {
    let d = s.len();
    let mut acc: BTreeMap<Vec<u32>, S> = BTreeMap::new();
    acc.insert(vec![0u32; d], S::one());
    for i in 0..d {
        if s[i] == 0 {
            continue;
        }
        let outcomes = CompositionSpace::new(d, s[i], capacity)?;
        let mut next: BTreeMap<Vec<u32>, S> = BTreeMap::new();
        for t in outcomes.iter() {
            let mut w = S::from_rational(&big_to_rational(&multinomial(t)));
            for (j, &c) in t.iter().enumerate() {
                w = w.mul_ref(&pow_u32(&kernel[i][j], c));
            }
            if w.is_zero() {
                continue;
            }
            for (base, bw) in acc.iter() {
                let mut target = base.clone();
                for (j, &c) in t.iter().enumerate() {
                    target[j] += c;
                }
                let add = bw.mul_ref(&w);
                let slot = next.entry(target).or_insert_with(S::zero);
                *slot = slot.clone() + add;
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn empty_kernel<S: Scalar>(states: usize) -> Vec<Vec<S>> {
    vec![vec![S::zero(); states]; states]
}

fn assemble<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
    kernel: Vec<Vec<S>>,
    lambda: Vec<S>,
    states: CompositionSpace,
    indices: MultiIndexSet,
) -> CompositionChain<S> {
    CompositionChain {
        states,
        indices,
        kernel,
        lambda,
        p: ball.p.clone(),
        n_balls,
        ball: ball.clone(),
    }
}

fn lift_spaces(
    d: usize,
    n_balls: u32,
    capacity: u128,
) -> Result<(CompositionSpace, MultiIndexSet)> {
    let states = CompositionSpace::new(d, n_balls, capacity)?;
    let indices = MultiIndexSet::new(d - 1, n_balls, capacity)?;
    let cells = states.len() as u128 * states.len() as u128;
    if cells > capacity {
        return Err(Error::Capacity {
            needed: cells,
            limit: capacity,
        });
    }
    Ok((states, indices))
}

/// Lift: pick one of the `N` balls uniformly and move it by the single-ball
/// kernel. Eigenvalues `λ_n = (n₀ + Σ nₗ ρₗ)/N`.
pub fn single_site_chain<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    let d = ball.d();
    let (states, indices) = lift_spaces(d, n_balls, capacity)?;
    let mut kernel = empty_kernel::<S>(states.len());
    let inv_n = S::from_rational(&BigRational::new(1.into(), (n_balls as i64).into()));
    for (xi, x) in states.iter().enumerate() {
        for i in 0..d {
            if x[i] == 0 {
                continue;
            }
            let pick = S::from_int(x[i] as i64).mul_ref(&inv_n);
            for j in 0..d {
                if ball.kernel[i][j].is_zero() {
                    continue;
                }
                let mut y = x.clone();
                y[i] -= 1;
                y[j] += 1;
                let yi = states.index_of(&y).expect("moved state in range");
                let add = pick.mul_ref(&ball.kernel[i][j]);
                kernel[xi][yi] = kernel[xi][yi].clone() + add;
            }
        }
    }
    let lambda = indices
        .iter()
        .map(|n| lambda_single_site(&ball.eigen.rho, n, n_balls))
        .collect();
    Ok(assemble(ball, n_balls, kernel, lambda, states, indices))
}

/// Lift: every ball moves independently by the single-ball kernel.
/// Eigenvalues `λ_n = ∏ ρₗ^{nₗ}`.
pub fn independent_all_chain<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    let d = ball.d();
    let (states, indices) = lift_spaces(d, n_balls, capacity)?;
    let mut kernel = empty_kernel::<S>(states.len());
    for (xi, x) in states.iter().enumerate() {
        for (y, w) in move_distribution(&ball.kernel, x, capacity)? {
            let yi = states.index_of(&y).expect("landing state in range");
            kernel[xi][yi] = kernel[xi][yi].clone() + w;
        }
    }
    let lambda = indices
        .iter()
        .map(|n| lambda_independent(&ball.eigen.rho, n))
        .collect();
    Ok(assemble(ball, n_balls, kernel, lambda, states, indices))
}

/// Lift: draw a subset size `k` from the law, pick a uniform `k`-subset of
/// balls, and move those balls independently by the single-ball kernel.
pub fn subset_chain<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
    law: &SubsetLaw,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    let d = ball.d();
    if law.max_size() != n_balls {
        return Err(Error::Dimension(
            "subset law must cover sizes 0..=N".into(),
        ));
    }
    let (states, indices) = lift_spaces(d, n_balls, capacity)?;
    let mut kernel = empty_kernel::<S>(states.len());
    let total_choose: Vec<BigRational> = (0..=n_balls)
        .map(|k| big_to_rational(&binomial(n_balls as u64, k as u64)))
        .collect();
    for (xi, x) in states.iter().enumerate() {
        for k in 0..=n_balls {
            if law.prob(k).is_zero() {
                continue;
            }
            let subsets = CompositionSpace::new(d, k, capacity)?;
            for s in subsets.iter() {
                if s.iter().zip(x.iter()).any(|(&si, &xi_)| si > xi_) {
                    continue;
                }
                let mut pick = law.prob(k) / &total_choose[k as usize];
                for i in 0..d {
                    pick *= big_to_rational(&binomial(x[i] as u64, s[i] as u64));
                }
                let pick = S::from_rational(&pick);
                for (t, w) in move_distribution(&ball.kernel, s, capacity)? {
                    let mut y = x.clone();
                    for i in 0..d {
                        y[i] = y[i] - s[i] + t[i];
                    }
                    let yi = states.index_of(&y).expect("landing state in range");
                    let add = pick.mul_ref(&w);
                    kernel[xi][yi] = kernel[xi][yi].clone() + add;
                }
            }
        }
    }
    let lambda = indices
        .iter()
        .map(|n| lambda_subset(&ball.eigen.rho, n, n_balls, law))
        .collect();
    Ok(assemble(ball, n_balls, kernel, lambda, states, indices))
}

/// Refresh a uniformly random `k`-subset of the balls through the kernel.
pub fn ehrenfest_chain<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
    k: u32,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    subset_chain(ball, n_balls, &SubsetLaw::point_mass(k, n_balls)?, capacity)
}

/// `N` lamps, each on or off; flip a uniformly random set of `k` of them.
pub fn lightbulb_chain<S: Scalar>(
    n_balls: u32,
    k: u32,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    ehrenfest_chain(&flip_chain(), n_balls, k, capacity)
}

const WORD_STATE_LIMIT: u32 = 12;

/// Enumeration of `[d]^N` in base-`d` order.
fn word_states(d: usize, n_balls: u32) -> Result<Vec<Vec<usize>>> {
    if d as u32 * n_balls > WORD_STATE_LIMIT {
        return Err(Error::Capacity {
            needed: (d as u32 * n_balls) as u128,
            limit: WORD_STATE_LIMIT as u128,
        });
    }
    let size = (d as u128).pow(n_balls);
    let mut out = Vec::with_capacity(size as usize);
    let mut word = vec![0usize; n_balls as usize];
    loop {
        out.push(word.clone());
        let mut pos = n_balls as usize;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if word[pos] + 1 < d {
                word[pos] += 1;
                break;
            }
            word[pos] = 0;
        }
    }
}

fn word_type(word: &[usize], d: usize) -> Vec<u32> {
    let mut t = vec![0u32; d];
    for &c in word {
        t[c] += 1;
    }
    t
}

/// Product-space kernel: pick one of the `N` coordinates uniformly and move
/// it by the single-ball kernel.
pub fn product_single_site<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
) -> Result<Vec<Vec<S>>> {
    let d = ball.d();
    let words = word_states(d, n_balls)?;
    let m = words.len();
    let inv_n = S::from_rational(&BigRational::new(1.into(), (n_balls as i64).into()));
    let mut kernel = vec![vec![S::zero(); m]; m];
    for (zi, z) in words.iter().enumerate() {
        for t in 0..n_balls as usize {
            for j in 0..d {
                if ball.kernel[z[t]][j].is_zero() {
                    continue;
                }
                let mut z2 = z.clone();
                z2[t] = j;
                let target = word_index(&z2, d);
                let add = inv_n.mul_ref(&ball.kernel[z[t]][j]);
                kernel[zi][target] = kernel[zi][target].clone() + add;
            }
        }
    }
    Ok(kernel)
}

fn word_index(word: &[usize], d: usize) -> usize {
    word.iter().fold(0usize, |acc, &c| acc * d + c)
}

/// Product-space kernel: all coordinates move independently.
pub fn product_independent<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
) -> Result<Vec<Vec<S>>> {
    product_urn(&vec![ball.kernel.clone(); n_balls as usize])
}

/// Product-space kernel: refresh a uniform `k`-subset (size drawn from the
/// law), holding the rest fixed.
pub fn product_subset<S: Scalar>(
    ball: &SingleBallChain<S>,
    n_balls: u32,
    law: &SubsetLaw,
) -> Result<Vec<Vec<S>>> {
    let d = ball.d();
    let words = word_states(d, n_balls)?;
    let m = words.len();
    let n = n_balls as usize;
    let mut kernel = vec![vec![S::zero(); m]; m];
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones();
        if law.prob(k).is_zero() {
            continue;
        }
        let weight = law.prob(k) / big_to_rational(&binomial(n_balls as u64, k as u64));
        let weight = S::from_rational(&weight);
        for (zi, z) in words.iter().enumerate() {
            // enumerate moves of the selected coordinates
            let selected: Vec<usize> = (0..n).filter(|t| mask & (1 << t) != 0).collect();
            let mut targets: Vec<(usize, S)> = vec![(zi, weight.clone())];
            for &t in &selected {
                let mut next = Vec::new();
                for (idx, w) in &targets {
                    let base_word = word_of_index(*idx, d, n);
                    for j in 0..d {
                        if ball.kernel[z[t]][j].is_zero() {
                            continue;
                        }
                        let mut z2 = base_word.clone();
                        z2[t] = j;
                        next.push((word_index(&z2, d), w.mul_ref(&ball.kernel[z[t]][j])));
                    }
                }
                targets = next;
            }
            for (idx, w) in targets {
                kernel[zi][idx] = kernel[zi][idx].clone() + w;
            }
        }
    }
    Ok(kernel)
}

fn word_of_index(mut idx: usize, d: usize, n: usize) -> Vec<usize> {
    let mut word = vec![0usize; n];
    for pos in (0..n).rev() {
        word[pos] = idx % d;
        idx /= d;
    }
    word
}

/// Product-space kernel averaging over all assignments of the given
/// single-coordinate kernels to coordinates: `(1/N!) Σ_σ ⊗ₜ K_{σ(t)}`.
pub fn product_urn<S: Scalar>(kernels: &[Vec<Vec<S>>]) -> Result<Vec<Vec<S>>> {
    let n = kernels.len();
    if n == 0 {
        return Err(Error::Dimension("need at least one kernel".into()));
    }
    let d = kernels[0].len();
    let words = word_states(d, n as u32)?;
    let m = words.len();
    let mut kernel = vec![vec![S::zero(); m]; m];
    let perms = permutations(n);
    let inv_fact = S::from_rational(
        &(BigRational::one() / big_to_rational(&crate::comb::factorial(n as u32))),
    );
    for (zi, z) in words.iter().enumerate() {
        for (wi, w) in words.iter().enumerate() {
            let mut acc = S::zero();
            for perm in &perms {
                let mut term = S::one();
                for t in 0..n {
                    term = term.mul_ref(&kernels[perm[t]][z[t]][w[t]]);
                    if term.is_zero() {
                        break;
                    }
                }
                acc = acc + term;
            }
            kernel[zi][wi] = acc.mul_ref(&inv_fact);
        }
    }
    Ok(kernel)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for sub in permutations(n - 1) {
        for pos in 0..n {
            let mut perm = sub.clone();
            perm.insert(pos, n - 1);
            out.push(perm);
        }
    }
    out
}

/// Collapse a permutation-symmetric kernel on `[d]^N` to the composition
/// space (Dynkin lumping). Errors if the kernel is not invariant under
/// coordinate permutations, which is exactly when lumping is unsound.
pub fn dynkin_lump<S: Scalar>(
    full: &[Vec<S>],
    d: usize,
    n_balls: u32,
    p: &ProbabilityVector,
    ball: &SingleBallChain<S>,
    lambda: Vec<S>,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    let words = word_states(d, n_balls)?;
    let m = words.len();
    if full.len() != m || full.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("kernel does not match [d]^N".into()));
    }
    // symmetry check on adjacent-transposition generators
    for swap_at in 0..(n_balls as usize).saturating_sub(1) {
        for (zi, z) in words.iter().enumerate() {
            let mut zs = z.clone();
            zs.swap(swap_at, swap_at + 1);
            let zsi = word_index(&zs, d);
            for (wi, w) in words.iter().enumerate() {
                let mut ws = w.clone();
                ws.swap(swap_at, swap_at + 1);
                let wsi = word_index(&ws, d);
                if !(full[zi][wi].clone() - full[zsi][wsi].clone()).is_zero_within(0.0) {
                    return Err(Error::Precondition(format!(
                        "kernel is not symmetric under swapping coordinates {} and {}",
                        swap_at + 1,
                        swap_at + 2
                    )));
                }
            }
        }
    }
    let (states, indices) = lift_spaces(d, n_balls, capacity)?;
    let mut kernel = empty_kernel::<S>(states.len());
    // one representative word per composition
    for (ci, comp) in states.iter().enumerate() {
        let mut rep = Vec::new();
        for (cat, &count) in comp.iter().enumerate() {
            rep.extend(std::iter::repeat(cat).take(count as usize));
        }
        let zi = word_index(&rep, d);
        for (wi, w) in words.iter().enumerate() {
            if full[zi][wi].is_zero() {
                continue;
            }
            let target = states
                .index_of(&word_type(w, d))
                .expect("type of a word is a composition");
            kernel[ci][target] = kernel[ci][target].clone() + full[zi][wi].clone();
        }
    }
    Ok(CompositionChain {
        states,
        indices,
        kernel,
        lambda,
        p: p.clone(),
        n_balls,
        ball: ball.clone(),
    })
}

/// The urn lift: `N` correlation points are dealt to the `N` balls in
/// uniformly random order and each ball moves by its dealt kernel. Built on
/// the product space and lumped; eigenvalues are the symmetrized products
/// `E_σ[∏ₗ ∏_{typed slots} β^{σ(slot)}ₗ]`.
pub fn lancaster_urn_chain<S: Scalar>(
    points: &[Vec<S>],
    u: &OrthoBasis<S>,
    p: &ProbabilityVector,
    capacity: u128,
) -> Result<CompositionChain<S>> {
    if points.is_empty() {
        return Err(Error::Dimension("the urn must hold at least one point".into()));
    }
    let n_balls = points.len() as u32;
    let d = p.d();
    let mut kernels = Vec::with_capacity(points.len());
    for beta in points {
        let (chain, _) = lancaster_kernel(beta, u, p, 0.0)?;
        kernels.push(chain.kernel);
    }
    let full = product_urn(&kernels)?;
    let (_, indices) = lift_spaces(d, n_balls, capacity)?;
    let perms = permutations(points.len());
    let inv_fact = S::from_rational(
        &(BigRational::one() / big_to_rational(&crate::comb::factorial(n_balls))),
    );
    let mut lambda = Vec::with_capacity(indices.len());
    for n in indices.iter() {
        // slot types: n_l slots of type l, the rest type 0
        let mut types = Vec::with_capacity(n_balls as usize);
        for (l, &count) in n.iter().enumerate() {
            types.extend(std::iter::repeat(l + 1).take(count as usize));
        }
        types.resize(n_balls as usize, 0);
        let mut acc = S::zero();
        for perm in &perms {
            let mut term = S::one();
            for (slot, &ty) in types.iter().enumerate() {
                if ty >= 1 {
                    term = term.mul_ref(&points[perm[slot]][ty - 1]);
                }
            }
            acc = acc + term;
        }
        lambda.push(acc.mul_ref(&inv_fact));
    }
    let ball = lancaster_kernel(&points[0], u, p, 0.0)?.0;
    dynkin_lump(&full, d, n_balls, p, &ball, lambda, capacity)
}

/// Entrywise eigen verification: right `Σ_y K(x,y) Q_n(y,α) = λ_n Q_n(x,α)`
/// and left `Σ_x m(x) Q_n(x,β) K(x,y) = λ_n m(y) Q_n(y,β)`, with the α and
/// β polynomial tables supplied by the caller (the same table twice for
/// reversible chains).
#[derive(Clone, Debug)]
pub struct EigenReport {
    pub ok: bool,
    pub max_right_residual: f64,
    pub max_left_residual: f64,
    pub worst_index: Vec<u32>,
}

/// Per-index residuals `(right, left)` of the claimed diagonalization, in
/// table order.
pub fn eigen_residuals<S: Scalar>(
    chain: &CompositionChain<S>,
    alpha_table: &PolynomialTable<S>,
    beta_table: &PolynomialTable<S>,
) -> Vec<(f64, f64)> {
    let states = chain.states.len();
    let m: Vec<S> = chain
        .states
        .iter()
        .map(|x| S::from_rational(&multinomial_pmf(x, chain.p.as_slice())))
        .collect();
    let mut out = Vec::with_capacity(chain.indices.len());
    for r in 0..chain.indices.len() {
        let mut right: f64 = 0.0;
        let mut left: f64 = 0.0;
        for x in 0..states {
            let mut acc = S::zero();
            for y in 0..states {
                acc = acc + chain.kernel[x][y].mul_ref(alpha_table.value(r, y));
            }
            acc = acc - chain.lambda[r].mul_ref(alpha_table.value(r, x));
            right = right.max(acc.abs_f64());
        }
        for y in 0..states {
            let mut acc = S::zero();
            for x in 0..states {
                acc = acc + m[x]
                    .mul_ref(beta_table.value(r, x))
                    .mul_ref(&chain.kernel[x][y]);
            }
            acc = acc - chain.lambda[r].mul_ref(&m[y]).mul_ref(beta_table.value(r, y));
            left = left.max(acc.abs_f64());
        }
        out.push((right, left));
    }
    out
}

pub fn verify_eigen<S: Scalar>(
    chain: &CompositionChain<S>,
    alpha_table: &PolynomialTable<S>,
    beta_table: &PolynomialTable<S>,
    tol: f64,
) -> EigenReport {
    let residuals = eigen_residuals(chain, alpha_table, beta_table);
    let mut max_right: f64 = 0.0;
    let mut max_left: f64 = 0.0;
    let mut worst = chain.indices.get(0).to_vec();
    for (r, &(right, left)) in residuals.iter().enumerate() {
        if right.max(left) >= max_right.max(max_left) {
            worst = chain.indices.get(r).to_vec();
        }
        max_right = max_right.max(right);
        max_left = max_left.max(left);
    }
    EigenReport {
        ok: max_right <= tol && max_left <= tol,
        max_right_residual: max_right,
        max_left_residual: max_left,
        worst_index: worst,
    }
}

/// Worst deviation of the spectral reconstruction
/// `K(x,y) = m(y) (1 + Σ_{|n|≥1} λ_n Q_n(x,α) Q_n(y,β) / C(N;n⁺))`.
pub fn reconstruction_gap<S: Scalar>(
    chain: &CompositionChain<S>,
    alpha_table: &PolynomialTable<S>,
    beta_table: &PolynomialTable<S>,
) -> f64 {
    let states = chain.states.len();
    let m: Vec<S> = chain
        .states
        .iter()
        .map(|x| S::from_rational(&multinomial_pmf(x, chain.p.as_slice())))
        .collect();
    let inv_c: Vec<S> = (0..chain.indices.len())
        .map(|r| {
            let c = big_to_rational(&multinomial(&crate::comb::extended(
                chain.indices.get(r),
                chain.n_balls,
            )));
            S::from_rational(&(BigRational::one() / c))
        })
        .collect();
    let mut dev: f64 = 0.0;
    for x in 0..states {
        for y in 0..states {
            let mut acc = S::one();
            for r in 1..chain.indices.len() {
                acc = acc + chain.lambda[r]
                    .mul_ref(alpha_table.value(r, x))
                    .mul_ref(beta_table.value(r, y))
                    .mul_ref(&inv_c[r]);
            }
            acc = acc.mul_ref(&m[y]);
            dev = dev.max((acc - chain.kernel[x][y].clone()).abs_f64());
        }
    }
    dev
}

/// Outcome of a seeded trajectory: occupation counts over the states
/// (including the start), empirical frequencies, and total-variation
/// distance to the stationary multinomial.
#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub steps: u64,
    pub occupation: Vec<u64>,
    pub tv_to_stationary: f64,
    pub final_state: Vec<u32>,
}

/// Run the chain `steps` transitions from `x0` with a deterministic seed,
/// invoking `visit(step, state)` at step 0 for `x0` and after each
/// transition.
pub fn simulate_trace<S: Scalar>(
    chain: &CompositionChain<S>,
    x0: &[u32],
    steps: u64,
    seed: u64,
    mut visit: impl FnMut(u64, &[u32]),
) -> Result<SimulationReport> {
    let start = chain
        .states
        .index_of(x0)
        .ok_or_else(|| Error::Dimension(format!("{x0:?} is not a state of this chain")))?;
    let m = chain.states.len();
    let rows: Vec<Vec<f64>> = chain
        .kernel
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|v| {
                    acc += v.to_f64().max(0.0);
                    acc
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupation = vec![0u64; m];
    let mut state = start;
    occupation[state] += 1;
    visit(0, chain.states.get(state));
    for step in 1..=steps {
        let draw: f64 = rng.random::<f64>() * rows[state][m - 1];
        state = rows[state].partition_point(|&c| c < draw).min(m - 1);
        occupation[state] += 1;
        visit(step, chain.states.get(state));
    }
    let total = (steps + 1) as f64;
    let mut tv = 0.0;
    for (i, x) in chain.states.iter().enumerate() {
        let pi = f64::from_rational(&multinomial_pmf(x, chain.p.as_slice()));
        tv += (occupation[i] as f64 / total - pi).abs();
    }
    Ok(SimulationReport {
        steps,
        occupation,
        tv_to_stationary: tv / 2.0,
        final_state: chain.states.get(state).to_vec(),
    })
}

pub fn simulate<S: Scalar>(
    chain: &CompositionChain<S>,
    x0: &[u32],
    steps: u64,
    seed: u64,
) -> Result<SimulationReport> {
    simulate_trace(chain, x0, steps, seed, |_, _| {})
}
