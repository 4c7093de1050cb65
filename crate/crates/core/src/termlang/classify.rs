//! Regularity classification of a nonlinearity.
//!
//! Local Lipschitz continuity on the whole state space guarantees unique
//! trajectories; positively homogeneous factors can fail it near their
//! branch sets even when the total degree exceeds one. Each product term is
//! tested against sufficient conditions; a term that meets none is reported
//! and the nonlinearity is classified continuous-only (still usable, but
//! uniqueness of the simulated trajectory is not guaranteed).

use super::smoothness::factor_is_polynomial;
use super::{NonlinearitySpec, ScalarFactor};
use crate::rational::{fmt_rat, Rat};
use num_traits::One;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularityClass {
    /// Locally Lipschitz on all of state space.
    LocallyLipschitz,
    /// Continuous with growth of the stated degree, but possibly
    /// non-Lipschitz across some branch set.
    ContinuousOnly,
}

#[derive(Debug, Clone)]
pub struct TermClassification {
    pub component_degree: String,
    pub term_index: usize,
    pub lipschitz: bool,
    /// Which sufficient condition applied, or why none did.
    pub rule: String,
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub class: RegularityClass,
    pub terms: Vec<TermClassification>,
}

impl Classification {
    pub fn is_lipschitz(&self) -> bool {
        self.class == RegularityClass::LocallyLipschitz
    }

    /// Terms that forced the continuous-only classification.
    pub fn offending(&self) -> Vec<&TermClassification> {
        self.terms.iter().filter(|t| !t.lipschitz).collect()
    }
}

/// Classifies every product term of every known component (and the
/// generating rule's numerator and denominator for composite forms; the
/// denominator `1 + D` is bounded away from zero near the origin, so the
/// quotient inherits the numerator components' regularity).
pub fn classify(spec: &NonlinearitySpec) -> Classification {
    let mut terms = Vec::new();
    for c in spec.components() {
        for (ti, t) in c.terms.iter().enumerate() {
            let (lipschitz, rule) = classify_term(&t.factors, &c.degree);
            terms.push(TermClassification {
                component_degree: fmt_rat(&c.degree),
                term_index: ti,
                lipschitz,
                rule,
            });
        }
    }
    let class = if terms.iter().all(|t| t.lipschitz) {
        RegularityClass::LocallyLipschitz
    } else {
        RegularityClass::ContinuousOnly
    };
    Classification { class, terms }
}

/// One product term. `degree` is the total homogeneity degree (> 1 by
/// construction). Factors that reduce to polynomials are smooth and are
/// skipped; the remaining factors must jointly satisfy one of:
///
/// 1. every factor is individually Lipschitz: norm powers with exponent
///    at least 1, coordinate powers with exponent 0 or at least 1,
///    polynomial-norm powers with scaling exponent at least 1;
/// 2. every factor is a norm power with p > 1 (arbitrary exponents; the
///    product's gradient is controlled by the total degree);
/// 3. every factor is an even-order power sum, positive-definite in x
///    (norm powers with even p and injective matrix, polynomial norms with
///    positive-definite polynomial vector).
fn classify_term(factors: &[ScalarFactor], degree: &Rat) -> (bool, String) {
    let genuine: Vec<&ScalarFactor> = factors
        .iter()
        .filter(|f| !factor_is_polynomial(f))
        .collect();
    if genuine.is_empty() {
        return (true, "polynomial term".into());
    }

    let each_lipschitz = genuine.iter().all(|f| match f {
        ScalarFactor::NormPower { exponent, .. } => exponent >= &Rat::one(),
        ScalarFactor::CoordPower { exponent, .. } => exponent >= &Rat::one(),
        ScalarFactor::PolyNormPower { exponent, .. } => exponent >= &Rat::one(),
    });
    if each_lipschitz {
        return (true, "all non-polynomial factors have exponent >= 1".into());
    }

    // Injectivity keeps the norm argument zero only at the origin, where
    // the total degree controls the gradient.
    let all_smooth_norms = genuine.iter().all(|f| {
        matches!(f, ScalarFactor::NormPower { p, matrix, .. }
            if p > &Rat::one() && matrix.as_ref().is_none_or(matrix_injective))
    });
    if all_smooth_norms {
        // Degree > 1 bounds the product's gradient near the origin; away
        // from the origin each norm is smooth.
        debug_assert!(degree > &Rat::one());
        return (true, "product of norm powers with p > 1".into());
    }

    let all_positive_definite = genuine.iter().all(|f| match f {
        ScalarFactor::NormPower { matrix, p, .. } => {
            is_even(p) && matrix.as_ref().is_none_or(matrix_injective)
        }
        ScalarFactor::PolyNormPower { polys, .. } => polys_positive_definite(polys),
        ScalarFactor::CoordPower { .. } => false,
    });
    if all_positive_definite {
        return (true, "product of positive-definite even power sums".into());
    }

    let culprit = genuine
        .iter()
        .find(|f| match f {
            ScalarFactor::NormPower { exponent, p, .. } => {
                exponent < &Rat::one() && p <= &Rat::one()
            }
            ScalarFactor::CoordPower { exponent, .. } => exponent < &Rat::one(),
            ScalarFactor::PolyNormPower { exponent, .. } => exponent < &Rat::one(),
        })
        .copied()
        .or_else(|| genuine.first().copied());
    (
        false,
        match culprit {
            Some(f) => format!("factor {f} can break the Lipschitz property"),
            None => "no sufficient condition applies".into(),
        },
    )
}

fn is_even(p: &Rat) -> bool {
    use num_integer::Integer;
    use num_traits::Signed;
    p.is_integer() && p.numer().is_even() && p.is_positive()
}

fn matrix_injective(m: &crate::linalg::Mat) -> bool {
    if m.rows < m.cols {
        return false;
    }
    // Columns independent iff the Gram matrix is nonsingular.
    let mt = m.transpose();
    let gram = mt.matmul(m);
    let lu = crate::linalg::Lu::factor(&gram);
    lu.min_pivot > 1e-10 * m.max_abs().max(1.0).powi(2)
}

/// Checks `Σ_j P_j(u)^p > 0` on the unit sphere by deterministic sampling.
fn polys_positive_definite(polys: &[super::poly::Poly]) -> bool {
    let dim = match polys.first() {
        Some(q) => q.dim,
        None => return false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x706f_7364_6566);
    let samples = 512 * dim.max(1);
    let coeff_scale: f64 = polys
        .iter()
        .map(|q| q.max_abs_coeff())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for s in 0..samples {
        let mut u: Vec<f64> = (0..dim)
            .map(|_| rng.gen_range(-1.0f64..1.0))
            .collect();
        // Include the coordinate axes, where single monomials vanish.
        if s < 2 * dim {
            u = vec![0.0; dim];
            u[s / 2] = if s % 2 == 0 { 1.0 } else { -1.0 };
        }
        let n = crate::linalg::norm(&u);
        if n < 1e-3 {
            continue;
        }
        for v in u.iter_mut() {
            *v /= n;
        }
        let worst = polys.iter().map(|q| q.eval(&u).abs()).fold(0.0, f64::max);
        if worst <= 1e-7 * coeff_scale {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termlang::parser::parse_nonlinearity;
    use crate::termlang::SpecMode;

    fn class_of(src: &str, dim: usize) -> RegularityClass {
        let spec = parse_nonlinearity(src, dim, SpecMode::Finite).unwrap();
        classify(&spec).class
    }

    #[test]
    fn power_nonlinearity_is_lipschitz_for_large_exponent() {
        assert_eq!(
            class_of("-norm2(x)^{3/2} * x", 2),
            RegularityClass::LocallyLipschitz
        );
        // Below exponent 1 the Euclidean norm is still fine: p = 2 > 1.
        assert_eq!(
            class_of("-norm2(x)^{1/2} * x", 2),
            RegularityClass::LocallyLipschitz
        );
    }

    #[test]
    fn signed_coordinate_power_below_one_is_continuous_only() {
        assert_eq!(
            class_of("[-sgnpow(x_2, 1/3) * x_1^2, 0]", 2),
            RegularityClass::ContinuousOnly
        );
        // Exponent >= 1 restores the Lipschitz property.
        assert_eq!(
            class_of("[-abs(x_2)^{3/2} * x_1, 0]", 2),
            RegularityClass::LocallyLipschitz
        );
    }

    #[test]
    fn one_norm_with_small_exponent_is_continuous_only() {
        // ‖x‖_1^{1/2} has an unbounded gradient across coordinate planes.
        assert_eq!(
            class_of("-lpnorm(1; x)^{1/2} * x", 2),
            RegularityClass::ContinuousOnly
        );
        // With exponent >= 1 it is a composition of Lipschitz maps.
        assert_eq!(
            class_of("-lpnorm(1; x)^{3/2} * x", 2),
            RegularityClass::LocallyLipschitz
        );
    }

    #[test]
    fn positive_definite_polynorm_is_lipschitz() {
        assert_eq!(
            class_of("-polynorm2(x_1^2 + x_2^2, x_1*x_2)^{1/4} * x", 2),
            RegularityClass::LocallyLipschitz
        );
        // A single monomial vanishes on an axis: not positive definite.
        assert_eq!(
            class_of("-polynorm2(x_1*x_2)^{1/4} * x", 2),
            RegularityClass::ContinuousOnly
        );
    }

    #[test]
    fn offending_terms_are_named() {
        let spec =
            parse_nonlinearity("[-sgnpow(x_2, 1/3) * x_1^2, 0]", 2, SpecMode::Finite).unwrap();
        let c = classify(&spec);
        let off = c.offending();
        assert_eq!(off.len(), 1);
        assert!(off[0].rule.contains("sgnpow(x_2, 1/3)"));
    }
}
