//! Multivariate polynomials in the state variables.
//!
//! Coefficients are floats; exponent vectors are exact. Used for polynomial
//! tails of nonlinearity terms, for the bases of norm powers (sums of even
//! powers are polynomials), and as the polynomial part of symbolic
//! derivatives.

use std::collections::BTreeMap;
use std::fmt;

/// Polynomial in `dim` variables; keys are exponent vectors of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub dim: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Poly::zero(dim);
        if c != 0.0 {
            p.terms.insert(vec![0; dim], c);
        }
        p
    }

    pub fn one(dim: usize) -> Self {
        Poly::constant(dim, 1.0)
    }

    /// The coordinate monomial `x_i` (zero-based index).
    pub fn coord(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut exps = vec![0; dim];
        exps[i] = 1;
        let mut p = Poly::zero(dim);
        p.terms.insert(exps, 1.0);
        p
    }

    /// A single monomial `c · x^exps`.
    pub fn monomial(dim: usize, exps: Vec<u32>, c: f64) -> Self {
        assert_eq!(exps.len(), dim);
        let mut p = Poly::zero(dim);
        if c != 0.0 {
            p.terms.insert(exps, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(exps).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            let key = self
                .terms
                .iter()
                .find(|(_, v)| **v == 0.0)
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.terms.remove(&k);
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.dim);
        }
        Poly {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim);
        let mut out = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut out = Poly::one(self.dim);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to coordinate `i`.
    pub fn partial(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, c * e[i] as f64);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let mut sum = 0.0;
        for (e, c) in &self.terms {
            let mut v = *c;
            for (xi, &ei) in x.iter().zip(e) {
                if ei > 0 {
                    v *= xi.powi(ei as i32);
                }
            }
            sum += v;
        }
        sum
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Degree when every monomial has the same total degree, else `None`.
    /// The zero polynomial is homogeneous of any degree (`Some(0)` here).
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|e| e.iter().sum::<u32>());
        let first = match it.next() {
            None => return Some(0),
            Some(d) => d,
        };
        it.all(|d| d == first).then_some(first)
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let mag = c.abs();
            if first {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
                first = false;
            } else if *c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let is_const = e.iter().all(|&k| k == 0);
            if mag != 1.0 || is_const {
                write!(f, "{mag}")?;
                if !is_const {
                    write!(f, "*")?;
                }
            }
            let mut first_var = true;
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if !first_var {
                    write!(f, "*")?;
                }
                first_var = false;
                write!(f, "x_{}", i + 1)?;
                if k > 1 {
                    write!(f, "^{k}")?;
                }
            }
        }
        Ok(())
    }
}
