//! Explicit polynomial conservation laws of bounded degree.
//!
//! A polynomial h is conserved through every gradient flow of a loss
//! factoring through φ iff ⟨∇h, ∇φ_i⟩ = 0 holds as a polynomial identity for
//! every component φ_i. Writing h = Σ_α c_α·m_α over all monomials m_α with
//! 1 ≤ deg m_α ≤ max_degree (constants are trivially conserved and excluded)
//! turns each identity into one homogeneous linear condition on the c_α per
//! coefficient of ⟨∇m_α, ∇φ_i⟩; this module assembles that system exactly,
//! extracts its kernel, and returns a canonical reduced basis of law
//! polynomials (integer coefficients with content 1, leading monomials in
//! descending graded-lex order, each law re-verified symbolically before it
//! is returned).
//!
//! Functional independence of the found laws is measured separately by the
//! rank of their stacked gradients at generic sample points.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::exactalg::{normalize_integer_vector, rat, RatMatrix, Rational, SparseEchelon};
use crate::models::ReparamMap;
use crate::poly::{Monomial, Poly, PolyError};

/// Default cap on the number of ansatz monomials (unknowns).
pub const DEFAULT_ANSATZ_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum LawFinderError {
    #[error("ansatz of {unknowns} monomials up to degree {degree} exceeds the cap of {cap}")]
    AnsatzTooLarge {
        unknowns: u128,
        degree: u32,
        cap: usize,
    },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Canonical basis of all polynomial conservation laws up to a degree bound.
#[derive(Clone, Debug, PartialEq)]
pub struct LawBasis {
    /// Degree bound the ansatz ran with.
    pub max_degree: u32,
    /// Number of ansatz monomials (unknown coefficients).
    pub ansatz_size: usize,
    /// Reduced basis; linearly independent by construction.
    pub laws: Vec<Poly>,
}

impl LawBasis {
    /// Dimension of the law space within the ansatz.
    pub fn dimension(&self) -> usize {
        self.laws.len()
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.laws.iter().map(Poly::total_degree).collect()
    }

    pub fn rendered(&self, prefix: &str) -> Vec<String> {
        self.laws.iter().map(|p| p.render(prefix)).collect()
    }
}

/// Number of monomials in `dim` variables with degree in 1..=max_degree,
/// saturating at `u128::MAX`.
fn count_monomials(dim: usize, max_degree: u32) -> u128 {
    // C(dim + max_degree, max_degree) − 1, computed incrementally.
    let mut total: u128 = 0;
    let mut level: u128 = 1; // C(dim − 1 + k, k), starting at k = 0
    for k in 1..=u128::from(max_degree) {
        level = match level.checked_mul(dim as u128 + k - 1).map(|v| v / k) {
            Some(v) => v,
            None => return u128::MAX,
        };
        total = total.saturating_add(level);
    }
    total
}

/// All monomials of degree 1..=max_degree, ascending degree, lex within.
fn enumerate_monomials(dim: usize, max_degree: u32) -> Vec<Monomial> {
    fn rec(exps: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
        if pos == exps.len() - 1 {
            exps[pos] = remaining;
            out.push(Monomial(exps.clone()));
            return;
        }
        for e in 0..=remaining {
            exps[pos] = e;
            rec(exps, pos + 1, remaining - e, out);
        }
    }
    let mut out = Vec::new();
    let mut exps = vec![0u32; dim];
    for deg in 1..=max_degree {
        rec(&mut exps, 0, deg, &mut out);
    }
    out
}

/// The conservation residuals ⟨∇h, ∇φ_i⟩, one polynomial per φ component.
/// All of them vanishing identically is equivalent to h being conserved.
pub fn conservation_residuals(phi: &ReparamMap, h: &Poly) -> Result<Vec<Poly>, PolyError> {
    let dim = phi.dim();
    if h.dim() != dim {
        return Err(PolyError::DimensionMismatch(h.dim(), dim));
    }
    let grad_h: Vec<Poly> = (0..dim).map(|j| h.partial(j)).collect();
    phi.components()
        .iter()
        .map(|f| {
            let mut inner = Poly::zero(dim);
            for (j, hj) in grad_h.iter().enumerate() {
                if !hj.is_zero() {
                    inner = inner.add(&hj.mul(&f.partial(j))?);
                }
            }
            Ok(inner)
        })
        .collect()
}

/// Exact symbolic check that h is a conservation law for φ.
pub fn verify_law(phi: &ReparamMap, h: &Poly) -> Result<bool, PolyError> {
    Ok(conservation_residuals(phi, h)?.iter().all(Poly::is_zero))
}

/// Find a canonical basis of every polynomial conservation law of degree
/// ≤ `max_degree`, with the default ansatz cap.
pub fn find_polynomial_laws(phi: &ReparamMap, max_degree: u32) -> Result<LawBasis, LawFinderError> {
    find_polynomial_laws_capped(phi, max_degree, DEFAULT_ANSATZ_CAP)
}

/// Same as [`find_polynomial_laws`] with an explicit cap on the ansatz size.
pub fn find_polynomial_laws_capped(
    phi: &ReparamMap,
    max_degree: u32,
    ansatz_cap: usize,
) -> Result<LawBasis, LawFinderError> {
    let dim = phi.dim();
    let unknowns = count_monomials(dim, max_degree);
    if unknowns > ansatz_cap as u128 {
        return Err(LawFinderError::AnsatzTooLarge {
            unknowns,
            degree: max_degree,
            cap: ansatz_cap,
        });
    }
    let monos = enumerate_monomials(dim, max_degree);
    let n = monos.len();

    let grads: Vec<Vec<Poly>> = phi
        .components()
        .iter()
        .map(|f| (0..dim).map(|j| f.partial(j)).collect())
        .collect();

    // One constraint row per (component i, coefficient monomial μ) of
    // ⟨∇m_α, ∇φ_i⟩, assembled column by column over the unknowns α.
    let mut constraints: BTreeMap<(usize, Monomial), BTreeMap<usize, Rational>> = BTreeMap::new();
    for (alpha, m) in monos.iter().enumerate() {
        let m_poly = Poly::monomial(dim, &m.0, rat(1));
        for (i, grad) in grads.iter().enumerate() {
            let mut prod = Poly::zero(dim);
            for (j, g) in grad.iter().enumerate() {
                if m.0[j] > 0 && !g.is_zero() {
                    prod = prod.add(&m_poly.partial(j).mul(g)?);
                }
            }
            for (mu, c) in prod.terms() {
                constraints
                    .entry((i, mu.clone()))
                    .or_default()
                    .insert(alpha, c.clone());
            }
        }
    }

    // Row-reduce the (typically very tall) constraint system incrementally,
    // then extract the kernel from the surviving ~rank × n dense matrix.
    let mut echelon = SparseEchelon::new();
    for (_, row) in constraints {
        echelon.insert(row);
    }
    let rho = echelon.rank();
    let mut dense = RatMatrix::zeros(rho, n);
    for (r, row) in echelon.rows().iter().enumerate() {
        for (&alpha, v) in row {
            dense.set(r, alpha, v.clone());
        }
    }
    let kernel = dense.nullspace();

    // Canonicalize: reduced row echelon form over columns in descending
    // graded-lex monomial order, rows scaled to integer content 1.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| monos[b].cmp(&monos[a]));
    let mut km = RatMatrix::zeros(kernel.len(), n);
    for (r, v) in kernel.iter().enumerate() {
        for (jp, &orig) in order.iter().enumerate() {
            km.set(r, jp, v[orig].clone());
        }
    }
    let (reduced, _) = km.rref();
    let laws: Vec<Poly> = (0..kernel.len())
        .map(|r| {
            let coeffs: Vec<Rational> = (0..n).map(|jp| reduced.get(r, jp).clone()).collect();
            let coeffs = normalize_integer_vector(&coeffs);
            let mut p = Poly::zero(dim);
            for (jp, c) in coeffs.iter().enumerate() {
                if !c.is_zero() {
                    p = p.add(&Poly::monomial(dim, &monos[order[jp]].0, c.clone()));
                }
            }
            p
        })
        .collect();

    // The solver and the verifier share no code path beyond Poly arithmetic;
    // re-check every law before handing it out.
    for h in &laws {
        assert!(
            verify_law(phi, h)?,
            "internal error: solved law fails symbolic verification: {h}"
        );
    }
    Ok(LawBasis {
        max_degree,
        ansatz_size: n,
        laws,
    })
}

/// Functional independence of laws: rank of their stacked gradients at each
/// sample point, with the max/min over points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndependenceReport {
    pub per_point: Vec<usize>,
    pub max: usize,
    pub min: usize,
}

pub fn independence_report(laws: &[Poly], points: &[Vec<i64>]) -> IndependenceReport {
    assert!(!points.is_empty(), "need at least one sample point");
    let per_point: Vec<usize> = points
        .iter()
        .map(|pt| {
            if laws.is_empty() {
                return 0;
            }
            let coords: Vec<Rational> = pt.iter().map(|&x| rat(x)).collect();
            let rows: Vec<Vec<Rational>> = laws
                .iter()
                .map(|h| {
                    assert_eq!(h.dim(), pt.len(), "law dimension mismatch");
                    (0..h.dim()).map(|j| h.partial(j).eval(&coords)).collect()
                })
                .collect();
            RatMatrix::from_rows(&rows).rank()
        })
        .collect();
    IndependenceReport {
        max: per_point.iter().copied().max().unwrap_or(0),
        min: per_point.iter().copied().min().unwrap_or(0),
        per_point,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lieclosure::{close_lie_algebra, sample_distinct_points, ClosureParams};
    use crate::models::{build_phi, known_laws, ModelKind, ModelSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phi_of(kind: ModelKind, widths: &[usize]) -> ReparamMap {
        build_phi(&ModelSpec::network(kind, widths.to_vec())).unwrap()
    }

    /// Rank test: does `candidate` lie in the span of `laws`?
    fn span_contains(laws: &[Poly], candidate: &Poly) -> bool {
        let mut columns = BTreeMap::new();
        for p in laws.iter().chain([candidate]) {
            for (m, _) in p.terms() {
                let next = columns.len();
                columns.entry(m.clone()).or_insert(next);
            }
        }
        let to_row = |p: &Poly| {
            let mut row = vec![Rational::zero(); columns.len()];
            for (m, c) in p.terms() {
                row[columns[m]] = c.clone();
            }
            row
        };
        let base: Vec<Vec<Rational>> = laws.iter().map(to_row).collect();
        let mut extended = base.clone();
        extended.push(to_row(candidate));
        RatMatrix::from_rows(&base).rank() == RatMatrix::from_rows(&extended).rank()
    }

    /// Independent route to the law-space dimension: sample the constraint
    /// system ⟨∇h, ∇φ_i⟩(θ_t) = 0 at random integer points instead of
    /// matching symbolic coefficients. Its kernel always contains the true
    /// law space, so dimension equality proves the symbolic solver right.
    fn sampled_law_space_dim(phi: &ReparamMap, max_degree: u32, seed: u64) -> usize {
        let dim = phi.dim();
        let monos = enumerate_monomials(dim, max_degree);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let num_points = 3 * monos.len();
        let mut rows = Vec::new();
        for _ in 0..num_points {
            let pt: Vec<Rational> = (0..dim).map(|_| rat(rng.random_range(-9..=9))).collect();
            for f in phi.components() {
                let grad_f: Vec<Rational> = (0..dim).map(|j| f.partial(j).eval(&pt)).collect();
                let row: Vec<Rational> = monos
                    .iter()
                    .map(|m| {
                        let mp = Poly::monomial(dim, &m.0, rat(1));
                        (0..dim)
                            .map(|j| mp.partial(j).eval(&pt) * &grad_f[j])
                            .fold(Rational::zero(), |a, b| a + b)
                    })
                    .collect();
                rows.push(row);
            }
        }
        RatMatrix::from_rows(&rows).nullspace().len()
    }

    #[test]
    fn scalar_product_yields_the_hyperbolic_law() {
        let phi = build_phi(&ModelSpec::custom(vec!["t1*t2".into()], 2)).unwrap();
        let basis = find_polynomial_laws(&phi, 2).unwrap();
        assert_eq!(basis.rendered("t"), ["t1^2 - t2^2"]);
        assert_eq!(basis.degrees(), [2]);
        assert_eq!(basis.ansatz_size, 5);
    }

    #[test]
    fn no_linear_laws_for_scalar_product() {
        let phi = build_phi(&ModelSpec::custom(vec!["t1*t2".into()], 2)).unwrap();
        let basis = find_polynomial_laws(&phi, 1).unwrap();
        assert!(basis.laws.is_empty());
    }

    #[test]
    fn wide_scalar_linear_network_has_a_rotational_law_beyond_balancedness() {
        // For widths [1,2,1] the balancedness laws span 3 dimensions, but the
        // degree-2 law space is 4-dimensional: t1·t4 − t2·t3 is conserved too.
        let spec = ModelSpec::network(ModelKind::Linear, vec![1, 2, 1]);
        let phi = build_phi(&spec).unwrap();
        let basis = find_polynomial_laws(&phi, 2).unwrap();
        assert_eq!(basis.dimension(), 4);
        for known in known_laws(&spec).unwrap() {
            assert!(span_contains(&basis.laws, &known));
        }
        let rotational = Poly::parse("t1*t4 - t2*t3", 4, "t").unwrap();
        assert!(verify_law(&phi, &rotational).unwrap());
        assert!(span_contains(&basis.laws, &rotational));
    }

    #[test]
    fn relu_network_laws_are_the_per_neuron_balances() {
        let phi = phi_of(ModelKind::Relu2NoBias, &[2, 1, 1]);
        let basis = find_polynomial_laws(&phi, 2).unwrap();
        assert_eq!(basis.rendered("t"), ["t1^2 + t2^2 - t3^2"]);
        let phi = phi_of(ModelKind::Relu2Bias, &[1, 1, 1]);
        let basis = find_polynomial_laws(&phi, 2).unwrap();
        assert_eq!(basis.rendered("t"), ["t1^2 + t2^2 - t3^2"]);
    }

    #[test]
    fn law_space_dimension_matches_sampled_interpolation_oracle() {
        for (spec, degree) in [
            (ModelSpec::custom(vec!["t1*t2".into()], 2), 2),
            (ModelSpec::network(ModelKind::Linear, vec![1, 2, 1]), 2),
            (ModelSpec::network(ModelKind::Relu2NoBias, vec![2, 1, 1]), 2),
            (ModelSpec::network(ModelKind::Linear, vec![1, 1, 1]), 3),
        ] {
            let phi = build_phi(&spec).unwrap();
            let symbolic = find_polynomial_laws(&phi, degree).unwrap().dimension();
            let sampled = sampled_law_space_dim(&phi, degree, 42);
            assert_eq!(
                symbolic,
                sampled,
                "route disagreement for {}",
                spec.arch_key()
            );
        }
    }

    #[test]
    fn known_laws_lie_in_the_found_basis_for_network_families() {
        for spec in [
            ModelSpec::network(ModelKind::Linear, vec![2, 2, 2]),
            ModelSpec::network(ModelKind::Relu2NoBias, vec![3, 2, 2]),
            ModelSpec::network(ModelKind::Relu2Bias, vec![2, 2, 1]),
            ModelSpec::network(ModelKind::ReluDeepNoBias, vec![2, 2, 2, 2]),
        ] {
            let phi = build_phi(&spec).unwrap();
            let basis = find_polynomial_laws(&phi, 2).unwrap();
            for known in known_laws(&spec).unwrap() {
                assert!(
                    span_contains(&basis.laws, &known),
                    "missing known law for {}",
                    spec.arch_key()
                );
            }
        }
    }

    #[test]
    fn independence_count_matches_closure_law_count() {
        for spec in [
            ModelSpec::network(ModelKind::Linear, vec![2, 2, 2]),
            ModelSpec::network(ModelKind::Relu2NoBias, vec![2, 2, 2]),
        ] {
            let phi = build_phi(&spec).unwrap();
            let params = ClosureParams::default();
            let closure = close_lie_algebra(&spec, &params).unwrap();
            let basis = find_polynomial_laws(&phi, 2).unwrap();
            let points: Vec<Vec<i64>> = sample_distinct_points(&spec, &params)
                .unwrap()
                .into_iter()
                .map(|gp| gp.theta)
                .collect();
            let indep = independence_report(&basis.laws, &points);
            assert_eq!(indep.max, closure.num_laws.unwrap());
            assert_eq!(
                indep.min, indep.max,
                "independence varies across generic points"
            );
        }
    }

    #[test]
    fn independence_of_dependent_laws_is_less_than_their_number() {
        // h, 2h, and h² are pairwise distinct but functionally dependent.
        let h = Poly::parse("t1^2 - t2^2", 2, "t").unwrap();
        let laws = vec![h.clone(), h.scale(&rat(2)), h.mul(&h).unwrap()];
        let report = independence_report(&laws, &[vec![1, 2], vec![3, 5]]);
        assert_eq!(report.max, 1);
        assert_eq!(report.per_point, vec![1, 1]);
    }

    #[test]
    fn ansatz_cap_is_enforced() {
        let phi = build_phi(&ModelSpec::custom(vec!["t1*t2".into()], 2)).unwrap();
        let err = find_polynomial_laws_capped(&phi, 2, 3).unwrap_err();
        assert!(matches!(
            err,
            LawFinderError::AnsatzTooLarge {
                unknowns: 5,
                cap: 3,
                ..
            }
        ));
        assert!(find_polynomial_laws_capped(&phi, 2, 5).is_ok());
    }

    #[test]
    fn monomial_count_matches_enumeration() {
        for (dim, deg) in [(1, 3), (2, 4), (3, 2), (4, 3)] {
            assert_eq!(
                count_monomials(dim, deg),
                enumerate_monomials(dim, deg).len() as u128
            );
        }
        assert_eq!(count_monomials(200, 200), u128::MAX);
    }

    #[test]
    fn verify_law_rejects_non_laws_and_dimension_mismatches() {
        let phi = build_phi(&ModelSpec::custom(vec!["t1*t2".into()], 2)).unwrap();
        let good = Poly::parse("t1^2 - t2^2", 2, "t").unwrap();
        let bad = Poly::parse("t1^2 + t2^2", 2, "t").unwrap();
        assert!(verify_law(&phi, &good).unwrap());
        assert!(!verify_law(&phi, &bad).unwrap());
        let wrong_dim = Poly::parse("t1^2", 3, "t").unwrap();
        assert!(matches!(
            verify_law(&phi, &wrong_dim),
            Err(PolyError::DimensionMismatch(3, 2))
        ));
        // Residual of the non-law is 2·t1·t2·(t1² + t2²)' inner product:
        // ⟨∇(t1²+t2²), ∇(t1·t2)⟩ = 2·t1·t2 + 2·t1·t2 = 4·t1·t2.
        let residuals = conservation_residuals(&phi, &bad).unwrap();
        assert_eq!(residuals.len(), 1);
        assert_eq!(residuals[0].render("t"), "4*t1*t2");
    }

    #[test]
    fn constant_like_phi_conserves_all_coordinates() {
        let phi = build_phi(&ModelSpec::custom(vec!["7".into()], 3)).unwrap();
        let basis = find_polynomial_laws(&phi, 1).unwrap();
        assert_eq!(basis.rendered("t"), ["t1", "t2", "t3"]);
        let identity = build_phi(&ModelSpec::custom(vec!["t1".into(), "t2".into()], 2)).unwrap();
        let basis = find_polynomial_laws(&identity, 2).unwrap();
        assert!(basis.laws.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_combinations_of_found_laws_are_conserved(
            coeffs in proptest::collection::vec(-5i64..=5, 4),
        ) {
            let spec = ModelSpec::network(ModelKind::Linear, vec![1, 2, 1]);
            let phi = build_phi(&spec).unwrap();
            let basis = find_polynomial_laws(&phi, 2).unwrap();
            prop_assert_eq!(basis.dimension(), 4);
            let mut combo = Poly::zero(4);
            for (c, law) in coeffs.iter().zip(&basis.laws) {
                combo = combo.add(&law.scale(&rat(*c)));
            }
            prop_assert!(verify_law(&phi, &combo).unwrap());
        }

        #[test]
        fn rendered_laws_parse_back_to_themselves(degree in 1u32..=3) {
            let phi = build_phi(&ModelSpec::custom(
                vec!["t1*t2".into(), "t3^2".into()], 3,
            )).unwrap();
            let basis = find_polynomial_laws(&phi, degree).unwrap();
            for law in &basis.laws {
                let text = law.render("t");
                let back = Poly::parse(&text, 3, "t").unwrap();
                prop_assert_eq!(&back, law);
            }
        }
    }
}
