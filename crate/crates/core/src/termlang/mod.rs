//! Structured nonlinearities: sums of positively homogeneous components.
//!
//! Each component of homogeneity degree `β > 1` is a sum of product terms.
//! A product term multiplies scalar factors (norm powers, coordinate powers,
//! polynomial-norm powers) into a vector-valued polynomial tail. Degrees are
//! exact rationals throughout; only coefficients are floats.

pub mod classify;
pub mod composite;
pub mod parser;
pub mod poly;
pub mod smoothness;

use crate::linalg::Mat;
use crate::rational::{fmt_rat, rat_int, rat_to_f64, Rat};
use num_traits::{One, Signed};
use poly::Poly;
use std::fmt;
use thiserror::Error;

pub use composite::{CompositeRule, ScalarProduct};

#[derive(Debug, Error)]
pub enum TermError {
    #[error("component degree {degree} is not greater than 1")]
    DegreeError { degree: String },
    #[error("norm order p = {p} is below 1")]
    UnsupportedNorm { p: String },
    #[error("{0}")]
    Invalid(String),
}

/// How a coordinate enters a coordinate-power factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// `x_i^n`, integer exponent only.
    Plain,
    /// `|x_i|^γ`.
    Abs,
    /// `|x_i|^γ sign(x_i)`.
    Signed,
}

/// A scalar factor of a product term. Every factor is positively homogeneous;
/// its degree is the exponent (norm powers of `‖·‖_p` have degree `ν`
/// regardless of `p`, polynomial norms of homogeneous inputs scale likewise).
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFactor {
    /// `‖M x‖_p^ν`; `matrix: None` means `M = I`.
    NormPower {
        matrix: Option<Mat>,
        p: Rat,
        exponent: Rat,
    },
    /// `x_i^n`, `|x_i|^γ`, or `|x_i|^γ sign(x_i)` (zero-based `index`).
    CoordPower {
        index: usize,
        mode: SignMode,
        exponent: Rat,
    },
    /// `(Σ_j P_j(x)^p)^{ν/p}` with even `p` and homogeneous `P_j` of common
    /// degree `m`; the factor's homogeneity degree is `ν·m`.
    PolyNormPower {
        polys: Vec<Poly>,
        p: u32,
        exponent: Rat,
    },
}

impl ScalarFactor {
    /// Homogeneity degree of the factor.
    pub fn degree(&self) -> Rat {
        match self {
            ScalarFactor::NormPower { exponent, .. } => exponent.clone(),
            ScalarFactor::CoordPower { exponent, .. } => exponent.clone(),
            ScalarFactor::PolyNormPower { polys, exponent, .. } => {
                let m = polys
                    .iter()
                    .filter_map(|p| p.homogeneous_degree())
                    .max()
                    .unwrap_or(0);
                exponent * rat_int(m as i64)
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), TermError> {
        match self {
            ScalarFactor::NormPower { matrix, p, exponent } => {
                if p < &Rat::one() {
                    return Err(TermError::UnsupportedNorm { p: fmt_rat(p) });
                }
                if exponent.is_negative() {
                    return Err(TermError::Invalid(format!(
                        "norm power exponent {} is negative",
                        fmt_rat(exponent)
                    )));
                }
                if let Some(m) = matrix {
                    if m.cols != dim {
                        return Err(TermError::Invalid(format!(
                            "norm matrix has {} columns, state dimension is {dim}",
                            m.cols
                        )));
                    }
                }
                Ok(())
            }
            ScalarFactor::CoordPower { index, mode, exponent } => {
                if *index >= dim {
                    return Err(TermError::Invalid(format!(
                        "coordinate index {} exceeds dimension {dim}",
                        index + 1
                    )));
                }
                if exponent.is_negative() {
                    return Err(TermError::Invalid(format!(
                        "coordinate power exponent {} is negative",
                        fmt_rat(exponent)
                    )));
                }
                if *mode == SignMode::Plain && !exponent.is_integer() {
                    return Err(TermError::Invalid(format!(
                        "plain coordinate power needs an integer exponent, got {}; \
                         use abs(x_{}) or sgnpow(x_{}, {})",
                        fmt_rat(exponent),
                        index + 1,
                        index + 1,
                        fmt_rat(exponent)
                    )));
                }
                Ok(())
            }
            ScalarFactor::PolyNormPower { polys, p, exponent } => {
                if *p == 0 || p % 2 != 0 {
                    return Err(TermError::Invalid(format!(
                        "polynomial norm order must be a positive even integer, got {p}"
                    )));
                }
                if exponent.is_negative() {
                    return Err(TermError::Invalid(format!(
                        "polynomial norm exponent {} is negative",
                        fmt_rat(exponent)
                    )));
                }
                if polys.is_empty() {
                    return Err(TermError::Invalid(
                        "polynomial norm needs at least one argument".into(),
                    ));
                }
                let mut deg = None;
                for q in polys {
                    if q.dim != dim {
                        return Err(TermError::Invalid(
                            "polynomial norm argument has wrong dimension".into(),
                        ));
                    }
                    if q.is_zero() {
                        continue;
                    }
                    let d = q.homogeneous_degree().ok_or_else(|| {
                        TermError::Invalid(format!(
                            "polynomial norm argument {q} is not homogeneous"
                        ))
                    })?;
                    match deg {
                        None => deg = Some(d),
                        Some(d0) if d0 != d => {
                            return Err(TermError::Invalid(
                                "polynomial norm arguments have mixed degrees".into(),
                            ))
                        }
                        _ => {}
                    }
                }
                Ok(())
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            ScalarFactor::NormPower { matrix, p, exponent } => {
                let nu = rat_to_f64(exponent);
                if nu == 0.0 {
                    return 1.0;
                }
                let pf = rat_to_f64(p);
                let norm = match matrix {
                    None => lp_norm(x, pf),
                    Some(m) => lp_norm(&m.matvec(x), pf),
                };
                norm.powf(nu)
            }
            ScalarFactor::CoordPower { index, mode, exponent } => {
                let v = x[*index];
                let g = rat_to_f64(exponent);
                match mode {
                    SignMode::Plain => v.powi(g as i32),
                    SignMode::Abs => pow_or_one(v.abs(), g),
                    SignMode::Signed => pow_or_one(v.abs(), g) * sign(v),
                }
            }
            ScalarFactor::PolyNormPower { polys, p, exponent } => {
                let s = rat_to_f64(exponent) / *p as f64;
                if s == 0.0 {
                    return 1.0;
                }
                let w: f64 = polys.iter().map(|q| q.eval(x).powi(*p as i32)).sum();
                w.powf(s)
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `b^g` with the convention `b^0 = 1` even at `b = 0`.
fn pow_or_one(b: f64, g: f64) -> f64 {
    if g == 0.0 {
        1.0
    } else {
        b.powf(g)
    }
}

pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    if p == 2.0 {
        return crate::linalg::norm(v);
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = v.iter().map(|x| (x.abs() / scale).powf(p)).sum();
    scale * sum.powf(1.0 / p)
}

impl fmt::Display for ScalarFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFactor::NormPower { matrix, p, exponent } => {
                let arg = match matrix {
                    None => "x".to_string(),
                    Some(m) => {
                        let rows: Vec<String> = (0..m.rows)
                            .map(|i| {
                                let cells: Vec<String> =
                                    (0..m.cols).map(|j| format!("{}", m[(i, j)])).collect();
                                format!("[{}]", cells.join(", "))
                            })
                            .collect();
                        format!("[{}]*x", rows.join(", "))
                    }
                };
                if p.is_integer() && !p.numer().is_negative() {
                    write!(f, "norm{}({arg})", fmt_rat(p))?;
                } else {
                    write!(f, "lpnorm({}; {arg})", fmt_rat(p))?;
                }
                write_exponent(f, exponent)
            }
            ScalarFactor::CoordPower { index, mode, exponent } => match mode {
                SignMode::Plain => {
                    write!(f, "x_{}", index + 1)?;
                    write_exponent(f, exponent)
                }
                SignMode::Abs => {
                    write!(f, "abs(x_{})", index + 1)?;
                    write_exponent(f, exponent)
                }
                SignMode::Signed => {
                    write!(f, "sgnpow(x_{}, {})", index + 1, fmt_rat(exponent))
                }
            },
            ScalarFactor::PolyNormPower { polys, p, exponent } => {
                let args: Vec<String> = polys.iter().map(|q| q.to_string()).collect();
                write!(f, "polynorm{p}({})", args.join(", "))?;
                write_exponent(f, exponent)
            }
        }
    }
}

fn write_exponent(f: &mut fmt::Formatter<'_>, e: &Rat) -> fmt::Result {
    if e.is_one() {
        return Ok(());
    }
    if e.is_integer() {
        write!(f, "^{}", fmt_rat(e))
    } else {
        write!(f, "^{{{}}}", fmt_rat(e))
    }
}

/// Product of scalar factors times a vector polynomial tail.
///
/// `tail[c]` is the polynomial entering output coordinate `c`; nonzero tails
/// must share one homogeneous degree so the whole term is homogeneous.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub factors: Vec<ScalarFactor>,
    pub tail: Vec<Poly>,
}

impl ProductTerm {
    pub fn dim(&self) -> usize {
        self.tail.len()
    }

    pub fn validate(&self, dim: usize) -> Result<(), TermError> {
        if self.tail.len() != dim {
            return Err(TermError::Invalid(format!(
                "term tail has {} coordinates, state dimension is {dim}",
                self.tail.len()
            )));
        }
        for factor in &self.factors {
            factor.validate(dim)?;
        }
        let mut deg = None;
        for q in &self.tail {
            if q.is_zero() {
                continue;
            }
            let d = q.homogeneous_degree().ok_or_else(|| {
                TermError::Invalid(format!("term tail {q} is not homogeneous"))
            })?;
            match deg {
                None => deg = Some(d),
                Some(d0) if d0 != d => {
                    return Err(TermError::Invalid(
                        "term tail coordinates have mixed degrees".into(),
                    ))
                }
                _ => {}
            }
        }
        if deg.is_none() {
            return Err(TermError::Invalid("term has an all-zero tail".into()));
        }
        Ok(())
    }

    /// Homogeneity degree: factor degrees plus the tail degree.
    pub fn degree(&self) -> Rat {
        let tail_deg = self
            .tail
            .iter()
            .filter(|q| !q.is_zero())
            .filter_map(|q| q.homogeneous_degree())
            .next()
            .unwrap_or(0);
        let mut d = rat_int(tail_deg as i64);
        for factor in &self.factors {
            d += factor.degree();
        }
        d
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        let mut scalar = 1.0;
        for factor in &self.factors {
            scalar *= factor.evaluate(x);
        }
        for (o, q) in out.iter_mut().zip(&self.tail) {
            if !q.is_zero() {
                *o += scalar * q.eval(x);
            }
        }
    }
}

impl fmt::Display for ProductTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for factor in &self.factors {
            write!(f, "{factor} * ")?;
        }
        let cells: Vec<String> = self.tail.iter().map(|q| q.to_string()).collect();
        write!(f, "[{}]", cells.join(", "))
    }
}

/// All product terms of one homogeneity degree.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousComponent {
    pub degree: Rat,
    pub terms: Vec<ProductTerm>,
}

impl HomogeneousComponent {
    pub fn new(terms: Vec<ProductTerm>) -> Result<Self, TermError> {
        let mut degree = None;
        for t in &terms {
            let d = t.degree();
            match &degree {
                None => degree = Some(d),
                Some(d0) if *d0 != d => {
                    return Err(TermError::Invalid(
                        "component mixes homogeneity degrees".into(),
                    ))
                }
                _ => {}
            }
        }
        let degree = degree
            .ok_or_else(|| TermError::Invalid("component has no terms".into()))?;
        Ok(HomogeneousComponent { degree, terms })
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        for t in &self.terms {
            t.evaluate_into(x, out);
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.evaluate_into(x, &mut out);
        out
    }
}

/// Truncation semantics of the component list.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecMode {
    /// The listed degrees continue by a generating rule; more components can
    /// be materialized on demand.
    Infinite,
    /// The list is the entire nonlinearity.
    Finite,
    /// The list is exact up to a remainder of order `> β_last + margin`.
    FiniteWithRemainder { margin: Rat },
}

/// A nonlinearity given as homogeneous components of ascending degree.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec {
    pub dim: usize,
    pub mode: SpecMode,
    components: Vec<HomogeneousComponent>,
    rule: Option<CompositeRule>,
    /// Degrees materialized from `rule` are complete up to this bound.
    materialized_to: Option<Rat>,
}

impl NonlinearitySpec {
    pub fn zero(dim: usize) -> Self {
        NonlinearitySpec {
            dim,
            mode: SpecMode::Finite,
            components: Vec::new(),
            rule: None,
            materialized_to: None,
        }
    }

    pub fn new(
        dim: usize,
        mode: SpecMode,
        components: Vec<HomogeneousComponent>,
        rule: Option<CompositeRule>,
    ) -> Result<Self, TermError> {
        if rule.is_some() && mode == SpecMode::Finite {
            return Err(TermError::Invalid(
                "a composite rule implies an infinite component list".into(),
            ));
        }
        let mut spec = NonlinearitySpec {
            dim,
            mode,
            components: Vec::new(),
            rule,
            materialized_to: None,
        };
        if let Some(rule) = &spec.rule {
            rule.validate(dim)?;
        }
        for c in components {
            spec.insert_component(c)?;
        }
        for c in &spec.components {
            for t in &c.terms {
                t.validate(dim)?;
            }
            if c.degree <= Rat::one() {
                return Err(TermError::DegreeError {
                    degree: fmt_rat(&c.degree),
                });
            }
        }
        Ok(spec)
    }

    fn insert_component(&mut self, c: HomogeneousComponent) -> Result<(), TermError> {
        if c.degree <= Rat::one() {
            return Err(TermError::DegreeError {
                degree: fmt_rat(&c.degree),
            });
        }
        match self
            .components
            .binary_search_by(|probe| probe.degree.cmp(&c.degree))
        {
            Ok(i) => self.components[i].terms.extend(c.terms),
            Err(i) => self.components.insert(i, c),
        }
        Ok(())
    }

    pub fn components(&self) -> &[HomogeneousComponent] {
        &self.components
    }

    pub fn component(&self, r: usize) -> &HomogeneousComponent {
        &self.components[r]
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty() && self.rule.is_none()
    }

    pub fn has_rule(&self) -> bool {
        self.rule.is_some()
    }

    pub fn rule(&self) -> Option<&CompositeRule> {
        self.rule.as_ref()
    }

    /// Homogeneity degree of component `r`.
    pub fn degree(&self, r: usize) -> Rat {
        self.components[r].degree.clone()
    }

    /// `α_r = β_r − 1 > 0`.
    pub fn alpha(&self, r: usize) -> Rat {
        self.degree(r) - Rat::one()
    }

    /// Make every rule-generated component of degree `≤ bound` present.
    /// No-op for finite lists.
    pub fn materialize_through(&mut self, bound: &Rat) -> Result<(), TermError> {
        let rule = match &self.rule {
            None => return Ok(()),
            Some(r) => r.clone(),
        };
        if let Some(done) = &self.materialized_to {
            if done >= bound {
                return Ok(());
            }
        }
        for c in rule.components_through(bound)? {
            let already = self
                .materialized_to
                .as_ref()
                .map(|m| &c.degree <= m)
                .unwrap_or(false);
            if !already {
                self.insert_component(c)?;
            }
        }
        self.materialized_to = Some(bound.clone());
        Ok(())
    }

    /// Degrees of all currently known components, ascending.
    pub fn degrees(&self) -> Vec<Rat> {
        self.components.iter().map(|c| c.degree.clone()).collect()
    }

    /// Sum of the first `k_max` components at `x` (all when `k_max` is
    /// `None`). Rule-backed specs prefer [`Self::evaluate_modeled`].
    pub fn evaluate(&self, x: &[f64], k_max: Option<usize>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let n = k_max.unwrap_or(self.components.len()).min(self.components.len());
        for c in &self.components[..n] {
            c.evaluate_into(x, &mut out);
        }
        out
    }

    /// Value of the nonlinearity as modeled: closed form for rule-backed
    /// specs, full component sum otherwise.
    pub fn evaluate_modeled_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match &self.rule {
            Some(rule) => rule.evaluate_into(x, out),
            None => {
                for c in &self.components {
                    c.evaluate_into(x, out);
                }
            }
        }
    }

    pub fn evaluate_modeled(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.evaluate_modeled_into(x, &mut out);
        out
    }

    /// Like `evaluate_modeled`, but for `x = e^ρ u` given as `(ρ, u)`,
    /// returning `e^{−ρ} F(e^ρ u)`. Uses per-component scaling
    /// `e^{(β−1)ρ} F_β(u)` so no intermediate under/overflows for very
    /// negative `ρ`.
    pub fn evaluate_scaled_into(&self, rho: f64, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match &self.rule {
            Some(rule) => rule.evaluate_scaled_into(rho, u, out),
            None => {
                let mut tmp = vec![0.0; self.dim];
                for c in &self.components {
                    let w = ((rat_to_f64(&c.degree) - 1.0) * rho).exp();
                    if w == 0.0 {
                        continue;
                    }
                    tmp.fill(0.0);
                    c.evaluate_into(u, &mut tmp);
                    for (o, v) in out.iter_mut().zip(&tmp) {
                        *o += w * v;
                    }
                }
            }
        }
    }
}

/// Source of homogeneity degrees for exponent-set construction. Implementors
/// may generate degrees lazily (infinite lists).
pub trait DegreeSource {
    /// All degrees `β ≤ bound`, ascending. Must be monotone in `bound`.
    fn degrees_up_to(&mut self, bound: &Rat) -> Vec<Rat>;

    /// Whether any component exists at all.
    fn has_any(&mut self) -> bool;
}

impl DegreeSource for NonlinearitySpec {
    fn degrees_up_to(&mut self, bound: &Rat) -> Vec<Rat> {
        // Materialization failures surface later through expansion; degree
        // generation itself cannot fail for a validated rule.
        let _ = self.materialize_through(bound);
        self.components
            .iter()
            .map(|c| c.degree.clone())
            .filter(|d| d <= bound)
            .collect()
    }

    fn has_any(&mut self) -> bool {
        !self.is_zero()
    }
}

/// Fixed list of degrees; used when only the exponent set matters.
pub struct FixedDegrees(pub Vec<Rat>);

impl DegreeSource for FixedDegrees {
    fn degrees_up_to(&mut self, bound: &Rat) -> Vec<Rat> {
        let mut out: Vec<Rat> = self.0.iter().filter(|d| *d <= bound).cloned().collect();
        out.sort();
        out
    }

    fn has_any(&mut self) -> bool {
        !self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn cubic_1d() -> NonlinearitySpec {
        // F(x) = -x^3 in one dimension, written as |x|^2 * (-x).
        let term = ProductTerm {
            factors: vec![ScalarFactor::NormPower {
                matrix: None,
                p: rat_int(2),
                exponent: rat_int(2),
            }],
            tail: vec![Poly::coord(1, 0).scale(-1.0)],
        };
        NonlinearitySpec::new(
            1,
            SpecMode::Finite,
            vec![HomogeneousComponent::new(vec![term]).unwrap()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn degrees_and_eval() {
        let spec = cubic_1d();
        assert_eq!(spec.degree(0), rat_int(3));
        assert_eq!(spec.alpha(0), rat_int(2));
        let v = spec.evaluate_modeled(&[0.5]);
        assert!((v[0] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn scaled_eval_matches_direct() {
        let spec = cubic_1d();
        // x = e^rho * u with rho = -5
        let rho = -5.0f64;
        let u = [0.7];
        let mut out = [0.0];
        spec.evaluate_scaled_into(rho, &u, &mut out);
        let x = [rho.exp() * u[0]];
        let direct = spec.evaluate_modeled(&x);
        assert!((out[0] - direct[0] * (-rho).exp()).abs() < 1e-18);
    }

    #[test]
    fn scaled_eval_survives_tiny_magnitudes() {
        let spec = cubic_1d();
        // |x| = e^-500 underflows f64; the scaled form must stay finite.
        let mut out = [0.0];
        spec.evaluate_scaled_into(-500.0, &[1.0], &mut out);
        assert!(out[0].is_finite());
        assert!((out[0] - -(-1000.0f64).exp()).abs() < 1e-300);
    }

    #[test]
    fn rejects_low_degree() {
        let term = ProductTerm {
            factors: vec![],
            tail: vec![Poly::coord(1, 0)],
        };
        let err = NonlinearitySpec::new(
            1,
            SpecMode::Finite,
            vec![HomogeneousComponent::new(vec![term]).unwrap()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, TermError::DegreeError { .. }));
    }

    #[test]
    fn rejects_sub_one_norm() {
        let f = ScalarFactor::NormPower {
            matrix: None,
            p: rat(1, 2),
            exponent: rat_int(2),
        };
        assert!(matches!(
            f.validate(2),
            Err(TermError::UnsupportedNorm { .. })
        ));
    }

    #[test]
    fn plain_power_requires_integer() {
        let f = ScalarFactor::CoordPower {
            index: 0,
            mode: SignMode::Plain,
            exponent: rat(1, 3),
        };
        assert!(f.validate(1).is_err());
    }

    #[test]
    fn factor_display_round_trips_syntax() {
        let f = ScalarFactor::NormPower {
            matrix: None,
            p: rat_int(2),
            exponent: rat(5, 2),
        };
        assert_eq!(f.to_string(), "norm2(x)^{5/2}");
        let g = ScalarFactor::CoordPower {
            index: 1,
            mode: SignMode::Signed,
            exponent: rat(1, 3),
        };
        assert_eq!(g.to_string(), "sgnpow(x_2, 1/3)");
    }

    #[test]
    fn merges_equal_degree_components() {
        let t1 = ProductTerm {
            factors: vec![],
            tail: vec![Poly::monomial(1, vec![3], 1.0)],
        };
        let t2 = ProductTerm {
            factors: vec![ScalarFactor::NormPower {
                matrix: None,
                p: rat_int(2),
                exponent: rat_int(2),
            }],
            tail: vec![Poly::coord(1, 0)],
        };
        let spec = NonlinearitySpec::new(
            1,
            SpecMode::Finite,
            vec![
                HomogeneousComponent::new(vec![t1]).unwrap(),
                HomogeneousComponent::new(vec![t2]).unwrap(),
            ],
            None,
        )
        .unwrap();
        assert_eq!(spec.n_components(), 1);
        assert_eq!(spec.component(0).terms.len(), 2);
        // x^3 + |x|^2 x at x = 2: 8 + 8 = 16
        assert!((spec.evaluate_modeled(&[2.0])[0] - 16.0).abs() < 1e-12);
    }
}
