//! Iterated Lie-bracket closure of the gradient span of a reparametrization,
//! and the law count derived from it.
//!
//! For φ: R^D → R^d let W_0 = span{∇φ_1, …, ∇φ_d}. The recursion
//!
//! ```text
//! W_k = W_{k−1} + [W_0, W_{k−1}]
//! ```
//!
//! is carried out symbolically with exact rational arithmetic. After every
//! iteration the dimension of the evaluated span W_k(θ) is measured at `s`
//! certified generic integer points. The recursion stops as soon as those
//! per-point dimensions stop changing from one iteration to the next
//! ([`StopReason::Stagnated`] when all points then agree on a common value,
//! [`StopReason::DimDisagreement`] otherwise), or when an iteration or degree
//! budget is exhausted. On stagnation at dimension n the number of
//! independent conservation laws in a neighbourhood of the sample points is
//! `D − n`.
//!
//! The engine keeps a persistent sparse echelon of all fields accepted so
//! far, so each iteration only brackets the original generators against the
//! fields that were newly accepted in the previous iteration ("frontier");
//! by bilinearity of the bracket this spans the same space as bracketing
//! against all of W_{k−1}. A slower, obviously-correct route over full
//! bracket pairings is available through [`crate::vfield::bracket_closure_step`]
//! and is held equal to this engine in the tests.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactalg::{rat, RatMatrix, Rational, SparseEchelon};
use crate::models::{
    build_phi, derive_seed, sample_generic_point, GenericPoint, ModelError, ModelSpec, ReparamMap,
};
use crate::poly::{Monomial, DEFAULT_DEGREE_CAP};
use crate::vfield::{lie_bracket, lie_bracket_capped, FieldSpace, PolyVectorField};

/// Tunable limits and sampling parameters for the closure computation.
/// Fields omitted when deserializing fall back to the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosureParams {
    /// Number of distinct generic sample points s.
    pub samples: usize,
    /// Sample coordinates are drawn from [−bound, bound] \ {0}.
    pub bound: i64,
    /// Maximum number of bracket iterations.
    pub max_iter: u32,
    /// Abort when a bracket's a-priori degree bound exceeds this cap.
    pub degree_cap: u32,
    /// Base seed for point sampling.
    pub seed: u64,
}

impl Default for ClosureParams {
    fn default() -> Self {
        ClosureParams {
            samples: 5,
            bound: 10,
            max_iter: 10,
            degree_cap: DEFAULT_DEGREE_CAP,
            seed: 0,
        }
    }
}

/// Why the closure recursion stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Per-point dimensions unchanged over one iteration and equal across
    /// all sample points.
    Stagnated,
    /// Per-point dimensions unchanged but different points report different
    /// values; the result is not trusted.
    DimDisagreement,
    /// The iteration budget ran out before stagnation.
    MaxIterations,
    /// A bracket would have exceeded the polynomial degree cap.
    DegreeCapExceeded,
}

#[derive(Debug, Error)]
pub enum ClosureError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("could not sample {needed} distinct generic points (got {got})")]
    NotEnoughPoints { needed: usize, got: usize },
}

/// Outcome of the closure recursion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosureResult {
    /// Ambient parameter dimension D.
    pub ambient_dim: usize,
    /// Number of φ components d.
    pub output_dim: usize,
    /// The generic integer sample points used for dimension measurements.
    pub points: Vec<Vec<i64>>,
    /// Row k holds dim W_k(θ_p) for every sample point p (row 0 = W_0).
    pub dims_per_iteration: Vec<Vec<usize>>,
    /// Number of completed bracket iterations.
    pub iterations_used: u32,
    pub stop_reason: StopReason,
    /// First i with dims(W_{i+1}) = dims(W_i), when stagnated.
    pub stagnation_step: Option<u32>,
    /// Whether W_1 already equals W_0 at every sample point, i.e. the
    /// gradient distribution is involutive there (Frobenius).
    pub frobenius_at_step0: bool,
    /// The agreed stagnated dimension, when stagnated.
    pub final_dim: Option<usize>,
    /// D − final_dim, when stagnated.
    pub num_laws: Option<usize>,
}

/// One sparse vector-field row: (component, monomial) → coefficient. The key
/// order (component ascending, monomial descending graded-lex) fixes a
/// canonical leading term for elimination.
type SparseRow = BTreeMap<(usize, Reverse<Monomial>), Rational>;

fn field_to_sparse(f: &PolyVectorField) -> SparseRow {
    let mut row = SparseRow::new();
    for (comp, p) in f.components().iter().enumerate() {
        for (mono, coeff) in p.terms() {
            row.insert((comp, Reverse(mono.clone())), coeff.clone());
        }
    }
    row
}

/// Incremental rank tracking of all accepted rows evaluated at one point.
struct PointContext {
    coords: Vec<Rational>,
    mono_cache: BTreeMap<Monomial, Rational>,
    rows: Vec<Vec<Rational>>,
    pivot_cols: Vec<usize>,
}

impl PointContext {
    fn new(point: &[i64]) -> Self {
        PointContext {
            coords: point.iter().map(|&x| rat(x)).collect(),
            mono_cache: BTreeMap::new(),
            rows: Vec::new(),
            pivot_cols: Vec::new(),
        }
    }

    fn mono_value(&mut self, mono: &Monomial) -> Rational {
        if let Some(v) = self.mono_cache.get(mono) {
            return v.clone();
        }
        let mut acc = Rational::one();
        for (i, &e) in mono.0.iter().enumerate() {
            if e > 0 {
                acc *= self.coords[i].pow(e as i32);
            }
        }
        self.mono_cache.insert(mono.clone(), acc.clone());
        acc
    }

    /// Evaluate a sparse field row at this point and fold it into the
    /// numeric echelon.
    fn absorb(&mut self, row: &SparseRow, dim: usize) {
        let mut dense = vec![Rational::zero(); dim];
        for ((comp, Reverse(mono)), coeff) in row {
            let val = self.mono_value(mono);
            dense[*comp] = &dense[*comp] + &(coeff * &val);
        }
        for (r, &pc) in self.rows.iter().zip(&self.pivot_cols) {
            if !dense[pc].is_zero() {
                let c = dense[pc].clone();
                for j in 0..dim {
                    dense[j] = &dense[j] - &(&r[j] * &c);
                }
            }
        }
        if let Some(p) = dense.iter().position(|x| !x.is_zero()) {
            let inv = dense[p].clone().recip();
            for x in dense.iter_mut() {
                *x = &*x * &inv;
            }
            self.rows.push(dense);
            self.pivot_cols.push(p);
        }
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }
}

struct Engine {
    dim: usize,
    sym: SparseEchelon<(usize, Reverse<Monomial>)>,
    points: Vec<PointContext>,
}

impl Engine {
    /// Returns true (and folds the reduced row into every point echelon)
    /// iff the field enlarges the symbolic span.
    fn admit(&mut self, f: &PolyVectorField) -> bool {
        if f.is_zero() {
            return false;
        }
        if !self.sym.insert(field_to_sparse(f)) {
            return false;
        }
        let stored = self.sym.rows().last().expect("row was just accepted");
        for ctx in &mut self.points {
            ctx.absorb(stored, self.dim);
        }
        true
    }

    fn dims(&self) -> Vec<usize> {
        self.points.iter().map(PointContext::rank).collect()
    }
}

/// The reduced span of the gradient fields of φ (canonical basis).
pub fn gradient_space(phi: &ReparamMap) -> FieldSpace {
    let grads: Vec<PolyVectorField> = phi
        .components()
        .iter()
        .map(PolyVectorField::gradient)
        .collect();
    FieldSpace::reduce(phi.dim(), &grads)
}

/// Sample `params.samples` pairwise-distinct certified generic points.
pub fn sample_distinct_points(
    spec: &ModelSpec,
    params: &ClosureParams,
) -> Result<Vec<GenericPoint>, ClosureError> {
    let mut points = Vec::new();
    let mut seen = BTreeSet::new();
    let mut stream = 0u64;
    let budget = (params.samples as u64) * 20;
    while points.len() < params.samples && stream < budget {
        let gp = sample_generic_point(spec, derive_seed(params.seed, stream), params.bound)?;
        stream += 1;
        if seen.insert(gp.theta.clone()) {
            points.push(gp);
        }
    }
    if points.len() < params.samples {
        return Err(ClosureError::NotEnoughPoints {
            needed: params.samples,
            got: points.len(),
        });
    }
    Ok(points)
}

/// Run the closure recursion for a model: build φ, sample generic points,
/// iterate brackets until stagnation or a budget stop.
pub fn close_lie_algebra(
    spec: &ModelSpec,
    params: &ClosureParams,
) -> Result<ClosureResult, ClosureError> {
    spec.validate()?;
    let phi = build_phi(spec)?;
    let points: Vec<Vec<i64>> = sample_distinct_points(spec, params)?
        .into_iter()
        .map(|gp| gp.theta)
        .collect();
    Ok(close_over_points(&phi, &points, params))
}

/// Run the closure recursion over explicitly given sample points.
pub fn close_over_points(
    phi: &ReparamMap,
    points: &[Vec<i64>],
    params: &ClosureParams,
) -> ClosureResult {
    let dim = phi.dim();
    assert!(!points.is_empty(), "need at least one sample point");
    for p in points {
        assert_eq!(p.len(), dim, "sample point has wrong dimension");
    }
    let gens: Vec<PolyVectorField> = phi
        .components()
        .iter()
        .map(PolyVectorField::gradient)
        .filter(|g| !g.is_zero())
        .collect();

    let mut engine = Engine {
        dim,
        sym: SparseEchelon::new(),
        points: points.iter().map(|p| PointContext::new(p)).collect(),
    };
    let mut frontier: Vec<PolyVectorField> = Vec::new();
    for g in &gens {
        if engine.admit(g) {
            frontier.push(g.clone());
        }
    }

    let mut dims = vec![engine.dims()];
    let mut iterations_used = 0u32;
    let mut stop_reason = None;
    let mut stagnation_step = None;
    let mut final_dim = None;

    for iter in 1..=params.max_iter {
        // [W_0, W_{k−1}] = [W_0, frontier] modulo W_{k−1}; in the first
        // iteration the frontier is W_0 itself, so unordered pairs suffice
        // by antisymmetry.
        let step = (|| -> Result<Vec<PolyVectorField>, crate::poly::PolyError> {
            let mut accepted = Vec::new();
            if iter == 1 {
                for i in 0..frontier.len() {
                    for j in i + 1..frontier.len() {
                        let b = lie_bracket_capped(&frontier[i], &frontier[j], params.degree_cap)?;
                        if engine.admit(&b) {
                            accepted.push(b);
                        }
                    }
                }
            } else {
                for g in &gens {
                    for f in &frontier {
                        let b = lie_bracket_capped(g, f, params.degree_cap)?;
                        if engine.admit(&b) {
                            accepted.push(b);
                        }
                    }
                }
            }
            Ok(accepted)
        })();
        match step {
            Err(_) => {
                stop_reason = Some(StopReason::DegreeCapExceeded);
                break;
            }
            Ok(accepted) => {
                frontier = accepted;
                iterations_used = iter;
                dims.push(engine.dims());
                let n = dims.len();
                if dims[n - 1] == dims[n - 2] {
                    let row = &dims[n - 1];
                    if row.iter().all(|&x| x == row[0]) {
                        stop_reason = Some(StopReason::Stagnated);
                        stagnation_step = Some(iter - 1);
                        final_dim = Some(row[0]);
                    } else {
                        stop_reason = Some(StopReason::DimDisagreement);
                    }
                    break;
                }
            }
        }
    }

    let stop_reason = stop_reason.unwrap_or(StopReason::MaxIterations);
    let frobenius_at_step0 = dims.len() >= 2 && dims[1] == dims[0];
    ClosureResult {
        ambient_dim: dim,
        output_dim: phi.len(),
        points: points.to_vec(),
        dims_per_iteration: dims,
        iterations_used,
        stop_reason,
        stagnation_step,
        frobenius_at_step0,
        final_dim,
        num_laws: final_dim.map(|fd| dim - fd),
    }
}

/// Independent involutivity test: every pairwise bracket of the reduced W_0
/// basis must lie in the evaluated span W_0(θ) at every sample point. This
/// re-derives `frobenius_at_step0` through `FieldSpace` instead of the
/// incremental engine.
pub fn check_frobenius(phi: &ReparamMap, points: &[Vec<i64>]) -> bool {
    let w0 = gradient_space(phi);
    let basis = w0.basis();
    if basis.len() <= 1 {
        return true;
    }
    let coords: Vec<Vec<Rational>> = points
        .iter()
        .map(|p| p.iter().map(|&x| rat(x)).collect())
        .collect();
    let evals: Vec<Vec<Vec<Rational>>> = coords
        .iter()
        .map(|c| basis.iter().map(|f| f.eval(c)).collect())
        .collect();
    let base_ranks: Vec<usize> = evals
        .iter()
        .map(|e| RatMatrix::from_rows(e).rank())
        .collect();
    for i in 0..basis.len() {
        for j in i + 1..basis.len() {
            let b = lie_bracket(&basis[i], &basis[j]);
            if b.is_zero() {
                continue;
            }
            for (p, c) in coords.iter().enumerate() {
                let mut rows = evals[p].clone();
                rows.push(b.eval(c));
                if RatMatrix::from_rows(&rows).rank() != base_ranks[p] {
                    return false;
                }
            }
        }
    }
    true
}
