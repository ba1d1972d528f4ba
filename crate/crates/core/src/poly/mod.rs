//! Sparse multivariate polynomial arithmetic over `f64` coefficients.
//!
//! Polynomials are stored exactly by structure: a map from monomials (exponent
//! vectors) to coefficients, with no stored zero coefficients. Arithmetic never
//! rounds away small coefficients; explicit cleanup is done with [`Polynomial::clean`].
//!
//! The term order is graded lexicographic (total degree first, then exponent
//! vector), which makes every iteration order and every derived index structure
//! deterministic.

mod parse;

pub use parse::{format_polynomial, parse_polynomial};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: {left} vs {right} variables")]
    DimensionMismatch { left: usize, right: usize },
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
}

/// Exponent vector of a single monomial, one entry per state variable.
///
/// Ordering is graded lexicographic: compare total degree first, then the
/// exponent vectors lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    /// The constant monomial (all exponents zero).
    pub fn unit(nvars: usize) -> Self {
        Monomial { exps: vec![0; nvars] }
    }

    /// Monomial `x_i` (zero-based variable index).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        Monomial { exps }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_unit(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    /// Product of two monomials (exponent-wise sum).
    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.exps
            .iter()
            .zip(x.coords())
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.exps.cmp(&other.exps))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unit() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// A point in state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn origin(n: usize) -> Self {
        Point { coords: vec![0.0; n] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// Sparse multivariate polynomial with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        if c != 0.0 {
            p.terms.insert(Monomial::unit(nvars), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Polynomial::constant(nvars, 1.0)
    }

    /// The variable `x_i` as a polynomial (zero-based index).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.terms.insert(Monomial::var(nvars, i), 1.0);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            debug_assert_eq!(m.nvars(), nvars);
            p.add_term(m, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &f64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree; zero polynomial reports 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Smallest total degree over the support; zero polynomial reports 0.
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).min().unwrap_or(0)
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let v = e.get() + c;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    fn check_dims(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { left: self.nvars, right: other.nvars });
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -*c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.nvars);
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::one(self.nvars);
        for _ in 0..k {
            out = out.mul(self).expect("same nvars");
        }
        out
    }

    /// Partial derivative with respect to variable `i` (zero-based).
    pub fn partial(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.exponents()[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[i] -= 1;
            out.add_term(Monomial::new(exps), c * e as f64);
        }
        out
    }

    /// Gradient as a vector of partial derivatives.
    pub fn gradient(&self) -> PolyVector {
        PolyVector::new((0..self.nvars).map(|i| self.partial(i)).collect())
    }

    pub fn evaluate(&self, x: &Point) -> Result<f64, PolyError> {
        if x.dim() != self.nvars {
            return Err(PolyError::DimensionMismatch { left: self.nvars, right: x.dim() });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(x)).sum())
    }

    /// `q(x) = p(x - c)` expanded in the original variables.
    pub fn shift(&self, c: &Point) -> Result<Polynomial, PolyError> {
        if c.dim() != self.nvars {
            return Err(PolyError::DimensionMismatch { left: self.nvars, right: c.dim() });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (m, coeff) in &self.terms {
            let shifted = shift_monomial(m, c);
            out = out.add(&shifted.scale(*coeff)).expect("same nvars");
        }
        Ok(out)
    }

    /// Drop coefficients with absolute value at most `tol`.
    pub fn clean(&self, tol: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            if c.abs() > tol {
                out.terms.insert(m.clone(), *c);
            }
        }
        out
    }

    /// True when the support contains only even total degrees (or only odd).
    pub fn consistent_parity(&self) -> Option<u32> {
        let mut parity = None;
        for m in self.terms.keys() {
            let p = m.degree() % 2;
            match parity {
                None => parity = Some(p),
                Some(q) if q != p => return None,
                _ => {}
            }
        }
        parity
    }
}

/// Expand `(x - c)^m` where `m` is a monomial exponent vector.
pub(crate) fn shift_monomial(m: &Monomial, c: &Point) -> Polynomial {
    let n = m.nvars();
    let mut out = Polynomial::one(n);
    for (i, &e) in m.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        let factor = Polynomial::var(n, i)
            .sub(&Polynomial::constant(n, c.coords()[i]))
            .expect("same nvars");
        out = out.mul(&factor.pow(e)).expect("same nvars");
    }
    out
}

/// Column vector of polynomials sharing the same variable count.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVector {
    entries: Vec<Polynomial>,
}

impl PolyVector {
    pub fn new(entries: Vec<Polynomial>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].nvars() == w[1].nvars()));
        PolyVector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &Polynomial {
        &self.entries[i]
    }

    pub fn dot(&self, other: &PolyVector) -> Result<Polynomial, PolyError> {
        assert_eq!(self.len(), other.len(), "dot of mismatched lengths");
        let n = self.entries[0].nvars();
        let mut out = Polynomial::zero(n);
        for (a, b) in self.entries.iter().zip(&other.entries) {
            out = out.add(&a.mul(b)?)?;
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: &Point) -> Result<Vec<f64>, PolyError> {
        self.entries.iter().map(|p| p.evaluate(x)).collect()
    }
}

/// Rectangular matrix of polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Polynomial>, // row-major
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Polynomial>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        PolyMatrix { rows, cols, entries }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entry(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    /// Matrix-vector product with a vector of polynomials.
    pub fn matvec(&self, v: &PolyVector) -> Result<PolyVector, PolyError> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        let n = self.entries[0].nvars();
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut acc = Polynomial::zero(n);
            for j in 0..self.cols {
                acc = acc.add(&self.entry(i, j).mul(v.entry(j))?)?;
            }
            out.push(acc);
        }
        Ok(PolyVector::new(out))
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> PolyVector {
        PolyVector::new((0..self.rows).map(|i| self.entry(i, j).clone()).collect())
    }

    pub fn evaluate(&self, x: &Point) -> Result<Vec<Vec<f64>>, PolyError> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.entry(i, j).evaluate(x)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, n: usize) -> Polynomial {
        let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        parse_polynomial(text, &names).unwrap()
    }

    #[test]
    fn add_cancellation_gives_zero() {
        let a = p("x1^2", 1);
        let b = p("-x1^2", 1);
        let s = a.add(&b).unwrap();
        assert!(s.is_zero());
        assert_eq!(s.num_terms(), 0);
    }

    #[test]
    fn add_merges_like_terms() {
        let a = p("x1 + x2", 2);
        let b = p("x2", 2);
        let s = a.add(&b).unwrap();
        assert_eq!(s, p("x1 + 2*x2", 2));
    }

    #[test]
    fn add_section7_allowable_at_origin() {
        let w1 = p("(x1 + 0.3)^2 + (x2/20)^2 + (x3/20)^2 - 0.5^2", 3);
        let w2 = p("(x1/20)^2 + x2^2 + x3^2 - 1.2^2", 3);
        let s = w1.add(&w2).unwrap();
        let v = s.evaluate(&Point::origin(3)).unwrap();
        assert!((v - (-1.60)).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn mul_basics() {
        assert_eq!(p("x1", 1).mul(&p("x1", 1)).unwrap(), p("x1^2", 1));
        assert_eq!(p("1 + x1", 1).mul(&p("1 - x1", 1)).unwrap(), p("1 - x1^2", 1));
    }

    #[test]
    fn mul_l_squared_has_six_terms() {
        let l = p("x1^2 + x2^2 + x3^2", 3);
        let l2 = l.mul(&l).unwrap();
        assert_eq!(l2.degree(), 4);
        assert_eq!(l2.num_terms(), 6);
    }

    #[test]
    fn mul_dimension_mismatch() {
        let a = p("x1", 1);
        let b = p("x1 + x2", 2);
        assert!(matches!(a.mul(&b), Err(PolyError::DimensionMismatch { .. })));
    }

    #[test]
    fn gradient_quadratic() {
        let q = p("x1^2 + x2^2", 2);
        let g = q.gradient();
        assert_eq!(g.entry(0), &p("2*x1", 2));
        assert_eq!(g.entry(1), &p("2*x2", 2));
    }

    #[test]
    fn gradient_constant_is_zero() {
        let g = p("5", 3).gradient();
        assert!(g.entries().iter().all(|e| e.is_zero()));
    }

    #[test]
    fn gradient_section7_w1() {
        let w1 = p("(x1 + 0.3)^2 + (x2/20)^2 + (x3/20)^2 - 0.5^2", 3);
        let g = w1.gradient();
        for (entry, expect) in [
            (g.entry(0), p("2*x1 + 0.6", 3)),
            (g.entry(1), p("2*x2/400", 3)),
            (g.entry(2), p("2*x3/400", 3)),
        ] {
            let diff = entry.sub(&expect).unwrap();
            assert!(diff.max_abs_coeff() < 1e-15, "gradient entry off: {diff:?}");
        }
    }

    #[test]
    fn evaluate_section7_values() {
        let w2 = p("(x1/20)^2 + x2^2 + x3^2 - 1.2^2", 3);
        assert!((w2.evaluate(&Point::origin(3)).unwrap() + 1.44).abs() < 1e-15);
        let r = p("(x1/0.8)^2 + (x2/1.2)^2 + (x3/1.2)^2 - 1.8", 3);
        assert!((r.evaluate(&Point::origin(3)).unwrap() + 1.8).abs() < 1e-15);
    }

    #[test]
    fn evaluate_constant_only() {
        let c = p("4.25", 2);
        assert_eq!(c.evaluate(&Point::new(vec![3.0, -1.0])).unwrap(), 4.25);
    }

    #[test]
    fn shift_identity_and_linear() {
        let q = p("x1^2", 2);
        assert_eq!(q.shift(&Point::origin(2)).unwrap(), q);
        let lin = p("x1", 3);
        assert_eq!(lin.shift(&Point::new(vec![-0.3, 0.0, 0.0])).unwrap(), p("x1 + 0.3", 3));
    }

    #[test]
    fn shift_w1_kills_linear_term() {
        let w1 = p("(x1 + 0.3)^2 + (x2/20)^2 + (x3/20)^2 - 0.5^2", 3);
        let shifted = w1.shift(&Point::new(vec![0.3, 0.0, 0.0])).unwrap();
        let x1 = Monomial::var(3, 0);
        assert_eq!(shifted.coeff(&x1), 0.0);
    }

    #[test]
    fn degree_is_additive_under_mul() {
        let a = p("x1^2*x2 + x1", 2);
        let b = p("x2^3 - 2", 2);
        assert_eq!(a.mul(&b).unwrap().degree(), a.degree() + b.degree());
    }

    #[test]
    fn grlex_order_is_graded() {
        let m1 = Monomial::new(vec![2, 0, 0]);
        let m2 = Monomial::new(vec![0, 1, 1]);
        let m3 = Monomial::new(vec![0, 0, 1]);
        assert!(m3 < m2);
        assert!(m2 < m1);
    }

    #[test]
    fn matvec_matches_hand_product() {
        let g = PolyMatrix::new(
            2,
            1,
            vec![p("1 + x1", 2), p("x2", 2)],
        );
        let v = PolyVector::new(vec![p("x1", 2)]);
        let out = g.matvec(&v).unwrap();
        assert_eq!(out.entry(0), &p("x1 + x1^2", 2));
        assert_eq!(out.entry(1), &p("x1*x2", 2));
    }
}
