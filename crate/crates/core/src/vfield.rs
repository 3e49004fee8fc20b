//! Polynomial vector fields, Lie brackets, and finite-dimensional spaces of
//! fields.
//!
//! A [`PolyVectorField`] is a map θ ↦ χ(θ) from R^D to R^D with polynomial
//! components. The Lie bracket
//!
//! ```text
//! [χ1, χ2](θ) = ∂χ1(θ)·χ2(θ) − ∂χ2(θ)·χ1(θ)
//! ```
//!
//! (with ∂χ the Jacobian) is computed symbolically and exactly. A
//! [`FieldSpace`] is a finite-dimensional linear span of fields with a
//! canonical reduced basis, obtained by row-reducing the coefficient matrix
//! of the fields over their union monomial support; its dimension at a point
//! ("trace dimension") is the exact rank of the evaluated basis.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use num_traits::Zero;

use crate::exactalg::{RatMatrix, Rational};
use crate::poly::{Monomial, Poly, PolyError};

/// Vector field on R^D with polynomial components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyVectorField {
    components: Vec<Poly>,
}

impl PolyVectorField {
    /// A field must be square: D components, each a polynomial in D variables.
    pub fn new(components: Vec<Poly>) -> Self {
        let dim = components.len();
        assert!(
            components.iter().all(|p| p.dim() == dim),
            "field components must be polynomials in exactly D = {dim} variables"
        );
        PolyVectorField { components }
    }

    pub fn zero(dim: usize) -> Self {
        PolyVectorField {
            components: vec![Poly::zero(dim); dim],
        }
    }

    /// Gradient field ∇p of a polynomial p.
    pub fn gradient(p: &Poly) -> Self {
        PolyVectorField::new((0..p.dim()).map(|j| p.partial(j)).collect())
    }

    /// Linear field θ ↦ Aθ.
    pub fn linear(a: &RatMatrix) -> Self {
        assert_eq!(a.rows(), a.cols(), "linear field needs a square matrix");
        let dim = a.rows();
        let components = (0..dim)
            .map(|i| {
                let mut p = Poly::zero(dim);
                for j in 0..dim {
                    p = p.add(&Poly::var(dim, j).scale(a.get(i, j)));
                }
                p
            })
            .collect();
        PolyVectorField::new(components)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    /// Largest total degree among components (0 for the zero field).
    pub fn max_degree(&self) -> u32 {
        self.components
            .iter()
            .map(Poly::total_degree)
            .max()
            .unwrap_or(0)
    }

    /// Jacobian matrix of polynomials, `J[i][j] = ∂χ_i/∂θ_j`.
    pub fn jacobian(&self) -> Vec<Vec<Poly>> {
        self.components
            .iter()
            .map(|p| (0..self.dim()).map(|j| p.partial(j)).collect())
            .collect()
    }

    pub fn eval(&self, point: &[Rational]) -> Vec<Rational> {
        self.components.iter().map(|p| p.eval(point)).collect()
    }

    pub fn add(&self, other: &PolyVectorField) -> PolyVectorField {
        assert_eq!(self.dim(), other.dim());
        PolyVectorField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        )
    }

    pub fn scale(&self, c: &Rational) -> PolyVectorField {
        PolyVectorField::new(self.components.iter().map(|p| p.scale(c)).collect())
    }
}

/// Lie bracket [a, b] = ∂a·b − ∂b·a, computed symbolically.
pub fn lie_bracket(a: &PolyVectorField, b: &PolyVectorField) -> PolyVectorField {
    lie_bracket_capped(a, b, u32::MAX).expect("uncapped bracket cannot overflow")
}

/// Lie bracket with a total-degree cap. The result degree is bounded a
/// priori by deg(a) + deg(b) − 1; if that exceeds `cap` the bracket aborts
/// with [`PolyError::DegreeCapExceeded`] before doing any multiplication.
pub fn lie_bracket_capped(
    a: &PolyVectorField,
    b: &PolyVectorField,
    cap: u32,
) -> Result<PolyVectorField, PolyError> {
    assert_eq!(
        a.dim(),
        b.dim(),
        "bracket requires equal ambient dimensions"
    );
    let dim = a.dim();
    let bound = (a.max_degree() + b.max_degree()).saturating_sub(1);
    if bound > cap {
        return Err(PolyError::DegreeCapExceeded { degree: bound, cap });
    }
    let mut components = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut acc = Poly::zero(dim);
        for j in 0..dim {
            let da = a.components[i].partial(j);
            if !da.is_zero() && !b.components[j].is_zero() {
                acc = acc.add(&da.mul(&b.components[j])?);
            }
            let db = b.components[i].partial(j);
            if !db.is_zero() && !a.components[j].is_zero() {
                acc = acc.sub(&db.mul(&a.components[j])?);
            }
        }
        components.push(acc);
    }
    Ok(PolyVectorField::new(components))
}

/// Column key for flattening fields into coefficient vectors: component
/// index first, then monomials in descending graded-lex order (so leading
/// entries of the reduced basis align with leading terms).
type ColKey = (usize, Reverse<Monomial>);

fn union_columns(fields: &[PolyVectorField]) -> BTreeMap<ColKey, usize> {
    let mut keys: BTreeMap<ColKey, usize> = BTreeMap::new();
    for f in fields {
        for (i, p) in f.components().iter().enumerate() {
            for (m, _) in p.terms() {
                keys.entry((i, Reverse(m.clone()))).or_insert(0);
            }
        }
    }
    for (idx, v) in keys.values_mut().enumerate() {
        *v = idx;
    }
    keys
}

fn flatten(field: &PolyVectorField, columns: &BTreeMap<ColKey, usize>) -> Vec<Rational> {
    let mut row = vec![Rational::from_integer(0.into()); columns.len()];
    for (i, p) in field.components().iter().enumerate() {
        for (m, c) in p.terms() {
            let idx = columns[&(i, Reverse(m.clone()))];
            row[idx] = c.clone();
        }
    }
    row
}

fn unflatten(row: &[Rational], columns: &BTreeMap<ColKey, usize>, dim: usize) -> PolyVectorField {
    let mut components = vec![Poly::zero(dim); dim];
    for ((comp, Reverse(m)), &idx) in columns {
        if !row[idx].is_zero() {
            components[*comp] = components[*comp].add(&Poly::monomial(dim, &m.0, row[idx].clone()));
        }
    }
    PolyVectorField::new(components)
}

/// Linear span of polynomial vector fields with a canonical reduced basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSpace {
    dim: usize,
    basis: Vec<PolyVectorField>,
}

impl FieldSpace {
    /// Canonical reduction: RREF of the flattened coefficient matrix over the
    /// union monomial support. Zero rows are dropped, so the resulting basis
    /// is linearly independent and canonical for the span.
    pub fn reduce(dim: usize, fields: &[PolyVectorField]) -> FieldSpace {
        for f in fields {
            assert_eq!(f.dim(), dim, "all fields must share the ambient dimension");
        }
        let nonzero: Vec<&PolyVectorField> = fields.iter().filter(|f| !f.is_zero()).collect();
        if nonzero.is_empty() {
            return FieldSpace {
                dim,
                basis: Vec::new(),
            };
        }
        let owned: Vec<PolyVectorField> = nonzero.iter().map(|f| (*f).clone()).collect();
        let columns = union_columns(&owned);
        let rows: Vec<Vec<Rational>> = owned.iter().map(|f| flatten(f, &columns)).collect();
        let (rref, pivots) = RatMatrix::from_rows(&rows).rref();
        let basis = (0..pivots.len())
            .map(|r| unflatten(rref.row(r), &columns, dim))
            .collect();
        FieldSpace { dim, basis }
    }

    pub fn empty(dim: usize) -> FieldSpace {
        FieldSpace {
            dim,
            basis: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[PolyVectorField] {
        &self.basis
    }

    /// Dimension of the span as a space of polynomial fields.
    pub fn symbolic_dim(&self) -> usize {
        self.basis.len()
    }

    /// Dimension of the trace `{χ(θ) : χ in span}` at a specific point:
    /// exact rank of the evaluated basis.
    pub fn trace_dim(&self, point: &[Rational]) -> usize {
        if self.basis.is_empty() {
            return 0;
        }
        let rows: Vec<Vec<Rational>> = self.basis.iter().map(|f| f.eval(point)).collect();
        RatMatrix::from_rows(&rows).rank()
    }
}

/// One step of the Lie-closure recursion: span(Wk ∪ [W0, Wk]), bracketing
/// every basis pair. The iterative engine in `lieclosure` uses an
/// incremental frontier variant with the same span.
pub fn bracket_closure_step(
    w0: &FieldSpace,
    wk: &FieldSpace,
    cap: u32,
) -> Result<FieldSpace, PolyError> {
    assert_eq!(w0.dim(), wk.dim());
    let mut fields: Vec<PolyVectorField> = wk.basis().to_vec();
    for u in w0.basis() {
        for v in wk.basis() {
            fields.push(lie_bracket_capped(u, v, cap)?);
        }
    }
    Ok(FieldSpace::reduce(wk.dim(), &fields))
}
