//! Exact rational linear algebra.
//!
//! Everything downstream (polynomial identity checks, rank stabilization of
//! the Lie closure, law extraction) depends on exact ranks and kernels, so
//! this module works over arbitrary-precision rationals throughout. Rank is
//! computed with Bareiss fraction-free elimination (intermediate values stay
//! integral once denominators are cleared, which bounds coefficient growth
//! deterministically); reduced row echelon form and nullspace extraction use
//! plain Gauss–Jordan over the rationals, whose output is canonical no matter
//! the pivot choices.

use std::collections::{btree_map, BTreeMap};

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{Integer, One, Signed, Zero};

/// Arbitrary-precision rational number.
///
/// `Ratio<BigInt>` maintains the canonical form this crate relies on:
/// gcd(numerator, denominator) = 1, denominator > 0, zero stored as 0/1.
pub type Rational = Ratio<BigInt>;

/// Shorthand for an integer-valued [`Rational`].
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Shorthand for the fraction `n/d`. Panics if `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Dense matrix of rationals, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    /// Build from row slices. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<Rational>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "all rows must have equal length"
        );
        RatMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().cloned().collect(),
        }
    }

    /// Build from integer row slices (convenient in tests and samplers).
    pub fn from_i64_rows(rows: &[Vec<i64>]) -> Self {
        let rows: Vec<Vec<Rational>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| rat(x)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> RatMatrix {
        let mut t = RatMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    /// Matrix–vector product.
    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Rational::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// Exact rank via Bareiss fraction-free elimination.
    ///
    /// Denominators are cleared row-wise first (rank-preserving), then the
    /// elimination keeps every intermediate value integral; the pivot in each
    /// column is the candidate with the largest absolute value, which keeps
    /// the exact divisions well-behaved and the procedure deterministic.
    pub fn rank(&self) -> usize {
        let mut m: Vec<Vec<BigInt>> = (0..self.rows)
            .map(|i| clear_denominators(self.row(i)))
            .collect();
        let (rows, cols) = (self.rows, self.cols);
        let mut prev = BigInt::one();
        let mut rank = 0;
        for c in 0..cols {
            if rank >= rows {
                break;
            }
            let pivot = (rank..rows)
                .filter(|&i| !m[i][c].is_zero())
                .max_by_key(|&i| m[i][c].abs());
            let Some(p) = pivot else { continue };
            m.swap(rank, p);
            for i in rank + 1..rows {
                for j in c + 1..cols {
                    let num = &m[rank][c] * &m[i][j] - &m[i][c] * &m[rank][j];
                    m[i][j] = num / &prev; // exact by the Bareiss minor identity
                }
                m[i][c] = BigInt::zero();
            }
            prev = m[rank][c].clone();
            rank += 1;
        }
        rank
    }

    /// Reduced row echelon form together with the pivot column indices.
    ///
    /// The RREF of a matrix is unique, so this doubles as a canonical form
    /// for row spaces.
    pub fn rref(&self) -> (RatMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r >= m.rows {
                break;
            }
            let pivot = (r..m.rows)
                .filter(|&i| !m.get(i, c).is_zero())
                .max_by_key(|&i| m.get(i, c).numer().abs());
            let Some(p) = pivot else { continue };
            m.swap_rows(r, p);
            let inv = m.get(r, c).clone().recip();
            for j in c..m.cols {
                let v = m.get(r, j) * &inv;
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                if i != r && !m.get(i, c).is_zero() {
                    let f = m.get(i, c).clone();
                    for j in c..m.cols {
                        let v = m.get(i, j) - m.get(r, j) * &f;
                        m.set(i, j, v);
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    /// Canonical basis of the (right) nullspace: one vector per free column,
    /// in ascending free-column order, each vector scaled to integer entries
    /// with content 1 and a positive leading nonzero entry.
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![Rational::zero(); self.cols];
                v[f] = Rational::one();
                for (row, &p) in pivots.iter().enumerate() {
                    v[p] = -r.get(row, f).clone();
                }
                normalize_integer_vector(&v)
            })
            .collect()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

/// Scale a row of rationals by the lcm of its denominators, yielding integers.
fn clear_denominators(row: &[Rational]) -> Vec<BigInt> {
    let lcm = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    row.iter().map(|x| x.numer() * (&lcm / x.denom())).collect()
}

/// Scale a rational vector to integer entries with content 1 and a positive
/// leading (first nonzero) entry. The zero vector is returned unchanged.
pub fn normalize_integer_vector(v: &[Rational]) -> Vec<Rational> {
    let ints = clear_denominators(v);
    let content = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if content.is_zero() {
        return v.to_vec();
    }
    let sign = ints
        .iter()
        .find(|x| !x.is_zero())
        .map_or(BigInt::one(), |x| {
            if x.is_negative() {
                -BigInt::one()
            } else {
                BigInt::one()
            }
        });
    let scale = content * sign;
    ints.into_iter()
        .map(|x| Rational::from_integer(x / &scale))
        .collect()
}

/// Incremental exact Gaussian elimination over sparse rows with keys of an
/// arbitrary ordered type. Rows are stored normalized (leading coefficient 1,
/// leading key = smallest key present) and never revisited, so insertion cost
/// depends only on the overlap between the new row and the existing pivots.
#[derive(Default)]
pub struct SparseEchelon<K: Ord + Clone> {
    rows: Vec<BTreeMap<K, Rational>>,
    leads: BTreeMap<K, usize>,
}

impl<K: Ord + Clone> SparseEchelon<K> {
    pub fn new() -> Self {
        SparseEchelon {
            rows: Vec::new(),
            leads: BTreeMap::new(),
        }
    }

    /// Reduce the row against the echelon; store the remainder if nonzero.
    /// Returns whether the row enlarged the span. Entries must be nonzero
    /// (absent keys are zero).
    pub fn insert(&mut self, mut row: BTreeMap<K, Rational>) -> bool {
        debug_assert!(row.values().all(|v| !v.is_zero()));
        loop {
            let Some((lead, lead_coeff)) = row.iter().next().map(|(k, v)| (k.clone(), v.clone()))
            else {
                return false;
            };
            match self.leads.get(&lead) {
                None => {
                    let inv = lead_coeff.recip();
                    for v in row.values_mut() {
                        *v = &*v * &inv;
                    }
                    self.leads.insert(lead, self.rows.len());
                    self.rows.push(row);
                    return true;
                }
                Some(&idx) => {
                    for (k, v) in self.rows[idx].clone() {
                        let delta = v * &lead_coeff;
                        match row.entry(k) {
                            btree_map::Entry::Occupied(mut e) => {
                                let nv = e.get() - &delta;
                                if nv.is_zero() {
                                    e.remove();
                                } else {
                                    *e.get_mut() = nv;
                                }
                            }
                            btree_map::Entry::Vacant(e) => {
                                e.insert(-delta);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BTreeMap<K, Rational>] {
        &self.rows
    }
}
