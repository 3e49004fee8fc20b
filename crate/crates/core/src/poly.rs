//! Sparse multivariate polynomials over exact rationals.
//!
//! Polynomials are stored as a map from exponent vectors to nonzero rational
//! coefficients, keyed in graded lexicographic order so that the internal
//! representation (and hence rendering, hashing into reports, and term
//! iteration) is canonical. Variables are rendered `t1..tD` by default.
//!
//! Multiplication is total-degree capped on request ([`Poly::mul_capped`]):
//! iterated Lie brackets are the one place degrees can grow without bound,
//! and the cap (default [`DEFAULT_DEGREE_CAP`]) turns runaway growth into an
//! explicit error instead of a memory blowup.

use std::collections::BTreeMap;
use std::fmt;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::exactalg::{rat, Rational};

/// Default total-degree cap for capped multiplication (and Lie brackets).
pub const DEFAULT_DEGREE_CAP: u32 = 16;

/// Monomial as an exponent vector; ordered graded-lexicographically
/// (total degree first, then lexicographic on the exponents).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(dim: usize) -> Self {
        Monomial(vec![0; dim])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("ambient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degree cap exceeded: product degree can reach {degree}, cap is {cap}")]
    DegreeCapExceeded { degree: u32, cap: u32 },
}

/// Parse failure with the byte offset where it happened.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Sparse polynomial in `dim` variables with rational coefficients.
///
/// Invariants: no stored coefficient is zero, and every exponent vector has
/// length `dim`. Equality is structural, which by canonical ordering is
/// mathematical equality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        let mut p = Poly::zero(dim);
        p.insert_term(Monomial::one(dim), c);
        p
    }

    /// The variable `θ_i` (0-based index).
    pub fn var(dim: usize, i: usize) -> Self {
        assert!(
            i < dim,
            "variable index {i} out of range for dimension {dim}"
        );
        let mut exps = vec![0; dim];
        exps[i] = 1;
        Poly::monomial(dim, &exps, rat(1))
    }

    pub fn monomial(dim: usize, exps: &[u32], coeff: Rational) -> Self {
        assert_eq!(exps.len(), dim);
        let mut p = Poly::zero(dim);
        p.insert_term(Monomial(exps.to_vec()), coeff);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial by convention.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    fn insert_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim, "ambient dimension mismatch in add");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.dim);
        }
        Poly {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Result<Poly, PolyError> {
        if self.dim != other.dim {
            return Err(PolyError::DimensionMismatch(self.dim, other.dim));
        }
        let mut out = Poly::zero(self.dim);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    /// Multiplication that refuses to produce results past the degree cap.
    /// The check is on the a-priori bound deg(p) + deg(q), so it triggers
    /// before any work (or memory) is spent on an oversized product.
    pub fn mul_capped(&self, other: &Poly, cap: u32) -> Result<Poly, PolyError> {
        if !self.is_zero() && !other.is_zero() {
            let bound = self.total_degree() + other.total_degree();
            if bound > cap {
                return Err(PolyError::DegreeCapExceeded { degree: bound, cap });
            }
        }
        self.mul(other)
    }

    pub fn pow(&self, k: u32) -> Result<Poly, PolyError> {
        let mut out = Poly::constant(self.dim, rat(1));
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Partial derivative with respect to variable `j` (0-based).
    pub fn partial(&self, j: usize) -> Poly {
        assert!(j < self.dim, "variable index out of range");
        let mut out = Poly::zero(self.dim);
        for (m, c) in &self.terms {
            let e = m.0[j];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[j] = e - 1;
            out.insert_term(Monomial(exps), c * rat(i64::from(e)));
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, point: &[Rational]) -> Rational {
        assert_eq!(
            point.len(),
            self.dim,
            "evaluation point has wrong dimension"
        );
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (x, &e) in point.iter().zip(&m.0) {
                for _ in 0..e {
                    term *= x;
                }
            }
            acc += term;
        }
        acc
    }

    /// Floating-point evaluation (for trajectory checks).
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(
            point.len(),
            self.dim,
            "evaluation point has wrong dimension"
        );
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut term = rational_to_f64(c);
            for (x, &e) in point.iter().zip(&m.0) {
                term *= x.powi(e as i32);
            }
            acc += term;
        }
        acc
    }

    /// Render with the given variable prefix (`t` → `t1..tD`), terms in
    /// descending graded-lex order.
    pub fn render(&self, prefix: &str) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let mag = c.abs();
            let vars = render_monomial(m, prefix);
            if vars.is_empty() {
                out.push_str(&format_rational(&mag));
            } else if mag.is_one() {
                out.push_str(&vars);
            } else {
                out.push_str(&format_rational(&mag));
                out.push('*');
                out.push_str(&vars);
            }
        }
        out
    }

    /// Parse a polynomial in the render grammar: `+ - * ^`, parentheses,
    /// integer or rational literals (`3`, `3/2`), variables `t1..tD`.
    pub fn parse(text: &str, dim: usize, prefix: &str) -> Result<Poly, ParseError> {
        let mut p = Parser {
            bytes: text.as_bytes(),
            pos: 0,
            dim,
            prefix,
        };
        let poly = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(poly)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render("t"))
    }
}

fn render_monomial(m: &Monomial, prefix: &str) -> String {
    m.0.iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| {
            if e == 1 {
                format!("{prefix}{}", i + 1)
            } else {
                format!("{prefix}{}^{e}", i + 1)
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

fn format_rational(c: &Rational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

pub(crate) fn rational_to_f64(c: &Rational) -> f64 {
    use num::ToPrimitive;
    c.to_f64().expect("rational magnitude out of f64 range")
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    dim: usize,
    prefix: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Poly, ParseError> {
        let mut acc = Poly::zero(self.dim);
        let mut sign = rat(1);
        match self.peek() {
            Some(b'+') => self.pos += 1,
            Some(b'-') => {
                sign = rat(-1);
                self.pos += 1;
            }
            _ => {}
        }
        loop {
            let term = self.term()?;
            acc = acc.add(&term.scale(&sign));
            match self.peek() {
                Some(b'+') => {
                    sign = rat(1);
                    self.pos += 1;
                }
                Some(b'-') => {
                    sign = rat(-1);
                    self.pos += 1;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let f = self.factor()?;
            acc = acc.mul(&f).expect("parser produces uniform dimensions");
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Poly, ParseError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.exponent()?;
            return base.pow(e).map_err(|_| self.err("exponent too large"));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Poly, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(_) if self.at_prefix() => self.variable(),
            _ => Err(self.err("expected a number, variable, or '('")),
        }
    }

    fn at_prefix(&mut self) -> bool {
        self.skip_ws();
        self.bytes[self.pos..].starts_with(self.prefix.as_bytes())
    }

    fn digits(&mut self) -> Result<u64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected digits"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ParseError {
                position: start,
                message: "integer literal too large".to_string(),
            })
    }

    fn number(&mut self) -> Result<Poly, ParseError> {
        let n = self.digits()? as i64;
        if self.peek() == Some(b'/') {
            self.pos += 1;
            let pos = self.pos;
            let d = self.digits()? as i64;
            if d == 0 {
                return Err(ParseError {
                    position: pos,
                    message: "zero denominator".to_string(),
                });
            }
            Ok(Poly::constant(self.dim, crate::exactalg::ratio(n, d)))
        } else {
            Ok(Poly::constant(self.dim, rat(n)))
        }
    }

    fn variable(&mut self) -> Result<Poly, ParseError> {
        self.skip_ws();
        let start = self.pos;
        self.pos += self.prefix.len();
        let idx = self.digits().map_err(|_| ParseError {
            position: start,
            message: format!("expected variable index after '{}'", self.prefix),
        })? as usize;
        if idx == 0 || idx > self.dim {
            return Err(ParseError {
                position: start,
                message: format!(
                    "variable {}{} out of range 1..={}",
                    self.prefix, idx, self.dim
                ),
            });
        }
        Ok(Poly::var(self.dim, idx - 1))
    }

    fn exponent(&mut self) -> Result<u32, ParseError> {
        let parenthesized = self.peek() == Some(b'(');
        if parenthesized {
            self.pos += 1;
        }
        if self.peek() == Some(b'-') {
            return Err(self.err("negative exponent"));
        }
        let e = self.digits()?;
        if parenthesized {
            if self.peek() != Some(b')') {
                return Err(self.err("expected ')'"));
            }
            self.pos += 1;
        }
        u32::try_from(e).map_err(|_| self.err("exponent too large"))
    }
}
