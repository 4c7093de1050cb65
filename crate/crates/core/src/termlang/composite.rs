//! Composite nonlinearities `F(x) = N(x) / (1 + D(x))` with homogeneous
//! numerator components `N = Σ N_i` and a scalar homogeneous denominator
//! tail `D` of positive degree `δ`.
//!
//! Near the origin the geometric series gives the homogeneous components
//! `F = Σ_{i,j} (−1)^j N_i · D^j` of degrees `β_i + jδ`; this module
//! materializes those on demand and keeps the closed form for evaluation.

use super::poly::Poly;
use super::{HomogeneousComponent, ProductTerm, ScalarFactor, TermError};
use crate::rational::{rat_int, rat_to_f64, Rat};
use num_traits::Zero;

/// Scalar-valued product: coefficient, scalar factors, polynomial part.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarProduct {
    pub coeff: f64,
    pub factors: Vec<ScalarFactor>,
    pub poly: Poly,
}

impl ScalarProduct {
    pub fn degree(&self) -> Rat {
        let mut d = rat_int(self.poly.homogeneous_degree().unwrap_or(0) as i64);
        for f in &self.factors {
            d += f.degree();
        }
        d
    }

    pub fn validate(&self, dim: usize) -> Result<(), TermError> {
        for f in &self.factors {
            f.validate(dim)?;
        }
        if self.poly.dim != dim {
            return Err(TermError::Invalid(
                "denominator polynomial has wrong dimension".into(),
            ));
        }
        if !self.poly.is_zero() && self.poly.homogeneous_degree().is_none() {
            return Err(TermError::Invalid(format!(
                "denominator polynomial {} is not homogeneous",
                self.poly
            )));
        }
        Ok(())
    }

    /// A zero `poly` stands for an absent polynomial part, not the zero
    /// polynomial; products like `‖x‖^β` carry factors only.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut v = self.coeff;
        for f in &self.factors {
            v *= f.evaluate(x);
        }
        if !self.poly.is_zero() {
            v *= self.poly.eval(x);
        }
        v
    }
}

/// Generating rule for an infinite list of homogeneous components.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub numerator: Vec<HomogeneousComponent>,
    pub denominator: ScalarProduct,
    /// Number of distinct degrees materialized by default.
    pub depth: usize,
}

impl CompositeRule {
    pub fn validate(&self, dim: usize) -> Result<(), TermError> {
        if self.numerator.is_empty() {
            return Err(TermError::Invalid("composite numerator is empty".into()));
        }
        for c in &self.numerator {
            for t in &c.terms {
                t.validate(dim)?;
            }
        }
        self.denominator.validate(dim)?;
        if self.denominator.degree() <= Rat::zero() {
            return Err(TermError::Invalid(
                "composite denominator tail must have positive degree".into(),
            ));
        }
        Ok(())
    }

    /// All homogeneous components of degree `≤ bound`, merged across
    /// numerator/denominator-power pairs that land on the same degree,
    /// ascending.
    pub fn components_through(&self, bound: &Rat) -> Result<Vec<HomogeneousComponent>, TermError> {
        let delta = self.denominator.degree();
        let mut by_degree: Vec<(Rat, Vec<ProductTerm>)> = Vec::new();
        for num in &self.numerator {
            let mut j: u32 = 0;
            loop {
                let degree = &num.degree + rat_int(j as i64) * &delta;
                if &degree > bound {
                    break;
                }
                let scale = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
                for t in &num.terms {
                    let expanded = self.multiply_by_denominator_power(t, j, scale);
                    match by_degree.binary_search_by(|(d, _)| d.cmp(&degree)) {
                        Ok(i) => by_degree[i].1.push(expanded),
                        Err(i) => by_degree.insert(i, (degree.clone(), vec![expanded])),
                    }
                }
                j += 1;
            }
        }
        by_degree
            .into_iter()
            .map(|(_, terms)| HomogeneousComponent::new(terms))
            .collect()
    }

    /// The first `depth` distinct degrees of the expansion.
    pub fn components_to_depth(&self, depth: usize) -> Result<Vec<HomogeneousComponent>, TermError> {
        let delta = self.denominator.degree();
        // Degrees form the set {β_i + jδ}; the first `depth` distinct ones
        // all lie within β_min + depth·δ.
        let beta_min = self
            .numerator
            .iter()
            .map(|c| c.degree.clone())
            .min()
            .ok_or_else(|| TermError::Invalid("composite numerator is empty".into()))?;
        let bound = beta_min + rat_int(depth as i64) * delta;
        let mut all = self.components_through(&bound)?;
        all.truncate(depth);
        Ok(all)
    }

    fn multiply_by_denominator_power(&self, t: &ProductTerm, j: u32, scale: f64) -> ProductTerm {
        let mut factors = t.factors.clone();
        let mut tail = t.tail.clone();
        if j > 0 {
            for _ in 0..j {
                factors.extend(self.denominator.factors.iter().cloned());
            }
            let c = scale * self.denominator.coeff.powi(j as i32);
            let mut poly_part = Poly::constant(self.denominator.poly.dim, c);
            if !self.denominator.poly.is_zero() {
                poly_part = self.denominator.poly.pow(j).scale(c);
            }
            tail = tail.iter().map(|q| q.mul(&poly_part)).collect();
        }
        normalize_factors(&mut factors);
        ProductTerm { factors, tail }
    }

    /// Closed form `N(x) / (1 + D(x))`, added into `out`.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        let den = 1.0 + self.denominator.evaluate(x);
        let mut num = vec![0.0; out.len()];
        for c in &self.numerator {
            c.evaluate_into(x, &mut num);
        }
        for (o, v) in out.iter_mut().zip(&num) {
            *o += v / den;
        }
    }

    /// `e^{−ρ} F(e^ρ u)` for `x = e^ρ u`: numerator components scale as
    /// `e^{(β−1)ρ}`, the denominator as `1 + e^{δρ} D(u)`.
    pub fn evaluate_scaled_into(&self, rho: f64, u: &[f64], out: &mut [f64]) {
        let delta = rat_to_f64(&self.denominator.degree());
        let den = 1.0 + (delta * rho).exp() * self.denominator.evaluate(u);
        let mut tmp = vec![0.0; out.len()];
        for c in &self.numerator {
            let w = ((rat_to_f64(&c.degree) - 1.0) * rho).exp();
            if w == 0.0 {
                continue;
            }
            tmp.fill(0.0);
            c.evaluate_into(u, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += w * v / den;
            }
        }
    }
}

/// Merge repeated factors so tensor construction sees each base once.
/// Norm powers over the same argument add exponents; plain coordinate powers
/// fold into a canonical order.
pub(crate) fn normalize_factors(factors: &mut Vec<ScalarFactor>) {
    let mut out: Vec<ScalarFactor> = Vec::with_capacity(factors.len());
    'next: for f in factors.drain(..) {
        for g in out.iter_mut() {
            if let Some(merged) = try_merge(g, &f) {
                *g = merged;
                continue 'next;
            }
        }
        out.push(f);
    }
    *factors = out;
}

fn try_merge(a: &ScalarFactor, b: &ScalarFactor) -> Option<ScalarFactor> {
    match (a, b) {
        (
            ScalarFactor::NormPower { matrix: m1, p: p1, exponent: e1 },
            ScalarFactor::NormPower { matrix: m2, p: p2, exponent: e2 },
        ) if m1 == m2 && p1 == p2 => Some(ScalarFactor::NormPower {
            matrix: m1.clone(),
            p: p1.clone(),
            exponent: e1 + e2,
        }),
        (
            ScalarFactor::CoordPower { index: i1, mode: mo1, exponent: e1 },
            ScalarFactor::CoordPower { index: i2, mode: mo2, exponent: e2 },
        ) if i1 == i2 && mo1 == mo2 => Some(ScalarFactor::CoordPower {
            index: *i1,
            mode: *mo1,
            exponent: e1 + e2,
        }),
        (
            ScalarFactor::PolyNormPower { polys: q1, p: p1, exponent: e1 },
            ScalarFactor::PolyNormPower { polys: q2, p: p2, exponent: e2 },
        ) if q1 == q2 && p1 == p2 => Some(ScalarFactor::PolyNormPower {
            polys: q1.clone(),
            p: *p1,
            exponent: e1 + e2,
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use num_traits::Signed;

    /// N(x) = ‖x‖^α x, D(x) = ‖x‖^δ in one dimension (x > 0 side).
    fn simple_rule(alpha: (i64, i64), delta: (i64, i64)) -> CompositeRule {
        let num = HomogeneousComponent::new(vec![ProductTerm {
            factors: vec![ScalarFactor::NormPower {
                matrix: None,
                p: rat_int(2),
                exponent: rat(alpha.0, alpha.1),
            }],
            tail: vec![Poly::coord(1, 0)],
        }])
        .unwrap();
        CompositeRule {
            numerator: vec![num],
            denominator: ScalarProduct {
                coeff: 1.0,
                factors: vec![ScalarFactor::NormPower {
                    matrix: None,
                    p: rat_int(2),
                    exponent: rat(delta.0, delta.1),
                }],
                poly: Poly::zero(1),
            },
            depth: 6,
        }
    }

    #[test]
    fn degrees_follow_arithmetic_progression() {
        let rule = simple_rule((1, 3), (1, 4));
        let comps = rule.components_to_depth(5).unwrap();
        let expect = [rat(4, 3), rat(19, 12), rat(11, 6), rat(25, 12), rat(7, 3)];
        let got: Vec<Rat> = comps.iter().map(|c| c.degree.clone()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn alternating_signs_match_geometric_series() {
        let rule = simple_rule((1, 2), (1, 2));
        // Expansion ratio at |x| = 0.09 is 0.3; twelve terms reach ~1e-7.
        let comps = rule.components_to_depth(12).unwrap();
        let x = [0.09f64];
        // Partial sums approach the closed form from alternating sides.
        let closed = {
            let mut out = [0.0];
            rule.evaluate_into(&x, &mut out);
            out[0]
        };
        let mut partial = 0.0;
        let mut prev_err = f64::INFINITY;
        for c in &comps {
            let mut v = [0.0];
            c.evaluate_into(&x, &mut v);
            partial += v[0];
            let err = (partial - closed).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-6);
    }

    #[test]
    fn scaled_closed_form_matches() {
        let rule = simple_rule((1, 3), (1, 4));
        let rho = -30.0f64;
        let u = [1.0];
        let mut scaled = [0.0];
        rule.evaluate_scaled_into(rho, &u, &mut scaled);
        let x = [rho.exp()];
        let mut direct = [0.0];
        rule.evaluate_into(&x, &mut direct);
        let rel = (scaled[0] - direct[0] * (-rho).exp()).abs() / scaled[0].abs();
        assert!(rel < 1e-12);
    }

    #[test]
    fn equal_degrees_from_distinct_routes_merge() {
        // β1 = 3/2 with δ = 1/2 collides: 3/2 + 1/2 = 2 = β2 + 0 when a
        // second numerator component has degree 2.
        let n1 = HomogeneousComponent::new(vec![ProductTerm {
            factors: vec![ScalarFactor::NormPower {
                matrix: None,
                p: rat_int(2),
                exponent: rat(1, 2),
            }],
            tail: vec![Poly::coord(1, 0)],
        }])
        .unwrap();
        let n2 = HomogeneousComponent::new(vec![ProductTerm {
            factors: vec![ScalarFactor::NormPower {
                matrix: None,
                p: rat_int(2),
                exponent: rat_int(1),
            }],
            tail: vec![Poly::coord(1, 0)],
        }])
        .unwrap();
        let rule = CompositeRule {
            numerator: vec![n1, n2],
            denominator: ScalarProduct {
                coeff: 1.0,
                factors: vec![ScalarFactor::NormPower {
                    matrix: None,
                    p: rat_int(2),
                    exponent: rat(1, 2),
                }],
                poly: Poly::zero(1),
            },
            depth: 4,
        };
        let comps = rule.components_to_depth(2).unwrap();
        assert_eq!(comps[0].degree, rat(3, 2));
        assert_eq!(comps[1].degree, rat_int(2));
        // Degree-2 terms: -|x|^{1/2}|x|^{1/2} x (merged exponents) and |x| x.
        assert_eq!(comps[1].terms.len(), 2);
        for t in &comps[1].terms {
            assert_eq!(t.factors.len(), 1);
            match &t.factors[0] {
                ScalarFactor::NormPower { exponent, .. } => {
                    assert!(!exponent.is_negative());
                    assert_eq!(exponent, &rat_int(1));
                }
                other => panic!("unexpected factor {other}"),
            }
        }
    }

    #[test]
    fn depth_counts_distinct_degrees() {
        let rule = simple_rule((1, 3), (1, 4));
        for depth in 1..6 {
            let comps = rule.components_to_depth(depth).unwrap();
            assert_eq!(comps.len(), depth);
        }
    }
}
