//! Vector-valued polynomials in the time variable.
//!
//! Series terms are polynomials `q(t) ∈ R^d`; degrees are tracked exactly by
//! coefficient count, so resonance bookkeeping (degree raised by exactly one)
//! is an integer statement, not a float one.

use serde::{Deserialize, Serialize};

/// `coeffs[k]` is the coefficient vector of `t^k`. Trailing exactly-zero
/// coefficient vectors are trimmed, so `coeffs.len() - 1` is the degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorPoly {
    pub dim: usize,
    pub coeffs: Vec<Vec<f64>>,
}

impl VectorPoly {
    pub fn zero(dim: usize) -> Self {
        VectorPoly {
            dim,
            coeffs: Vec::new(),
        }
    }

    pub fn constant(v: Vec<f64>) -> Self {
        let dim = v.len();
        let mut p = VectorPoly {
            dim,
            coeffs: vec![v],
        };
        p.trim();
        p
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Polynomial degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    fn trim(&mut self) {
        while let Some(last) = self.coeffs.last() {
            if last.iter().all(|&v| v == 0.0) {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeff(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    pub fn add(&self, other: &VectorPoly) -> VectorPoly {
        assert_eq!(self.dim, other.dim);
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![vec![0.0; self.dim]; n];
        for (k, c) in self.coeffs.iter().enumerate() {
            for (o, v) in coeffs[k].iter_mut().zip(c) {
                *o += v;
            }
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            for (o, v) in coeffs[k].iter_mut().zip(c) {
                *o += v;
            }
        }
        let mut p = VectorPoly { dim: self.dim, coeffs };
        p.trim();
        p
    }

    pub fn add_assign(&mut self, other: &VectorPoly) {
        *self = self.add(other);
    }

    pub fn scale(&self, s: f64) -> VectorPoly {
        let mut p = VectorPoly {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|v| v * s).collect())
                .collect(),
        };
        p.trim();
        p
    }

    /// Applies a matrix to every coefficient vector.
    pub fn map_matrix(&self, m: &crate::linalg::Mat) -> VectorPoly {
        let mut p = VectorPoly {
            dim: m.rows,
            coeffs: self.coeffs.iter().map(|c| m.matvec(c)).collect(),
        };
        p.trim();
        p
    }

    /// d/dt.
    pub fn derivative(&self) -> VectorPoly {
        if self.coeffs.len() <= 1 {
            return VectorPoly::zero(self.dim);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c.iter().map(|v| v * k as f64).collect())
            .collect();
        let mut p = VectorPoly { dim: self.dim, coeffs };
        p.trim();
        p
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> VectorPoly {
        if self.is_zero() {
            return VectorPoly::zero(self.dim);
        }
        let mut coeffs = vec![vec![0.0; self.dim]];
        for (k, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c.iter().map(|v| v / (k + 1) as f64).collect());
        }
        VectorPoly { dim: self.dim, coeffs }
    }

    /// Horner evaluation into `out` (accumulating nothing; `out` is set).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        for c in self.coeffs.iter().rev() {
            for (o, v) in out.iter_mut().zip(c) {
                *o = *o * t + v;
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_and_arithmetic() {
        // q(t) = (1, 0) + (0, 2) t
        let q = VectorPoly {
            dim: 2,
            coeffs: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        };
        assert_eq!(q.degree(), Some(1));
        assert_eq!(q.eval(3.0), vec![1.0, 6.0]);
        let dq = q.derivative();
        assert_eq!(dq.degree(), Some(0));
        assert_eq!(dq.eval(100.0), vec![0.0, 2.0]);
        let int = dq.antiderivative();
        assert_eq!(int.eval(3.0), vec![0.0, 6.0]);
    }

    #[test]
    fn trim_keeps_degree_exact() {
        let q = VectorPoly {
            dim: 1,
            coeffs: vec![vec![1.0], vec![2.0]],
        };
        let sum = q.add(&q.scale(-1.0));
        assert!(sum.is_zero());
        assert_eq!(sum.degree(), None);
    }
}
