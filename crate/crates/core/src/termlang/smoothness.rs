//! Checks whether every factor of a nonlinearity is infinitely
//! differentiable at a given point.
//!
//! The expansion machinery differentiates factors symbolically at the
//! asymptotic direction, so each factor must be smooth there: norm powers
//! need a nonzero argument (entrywise nonzero for non-even orders),
//! absolute-value powers need a nonzero coordinate, polynomial norms a
//! nonzero value. Factors that reduce to polynomials are exempt.

use super::poly::Poly;
use super::{NonlinearitySpec, ScalarFactor, SignMode};
use crate::linalg::Mat;
use crate::rational::Rat;
use num_integer::Integer;
use num_traits::{Signed, Zero};

/// Relative threshold below which a value counts as zero for gating.
pub const ZERO_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Obstruction {
    /// Degree of the offending component (display form).
    pub component_degree: String,
    pub term_index: usize,
    /// Grammar rendering of the offending factor.
    pub factor: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SmoothnessReport {
    pub applicable: bool,
    pub obstructions: Vec<Obstruction>,
    pub point: Vec<f64>,
}

impl std::fmt::Display for SmoothnessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.applicable {
            return write!(f, "all factors are smooth at the asymptotic direction");
        }
        for (i, o) in self.obstructions.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(
                f,
                "component of degree {}, term {}: factor {} {}",
                o.component_degree,
                o.term_index + 1,
                o.factor,
                o.reason
            )?;
        }
        Ok(())
    }
}

/// True when the exponent makes the factor a polynomial, so no smoothness
/// condition is needed at any point.
pub fn factor_is_polynomial(factor: &ScalarFactor) -> bool {
    match factor {
        ScalarFactor::NormPower { p, exponent, .. } => {
            if exponent.is_zero() {
                return true;
            }
            // ‖u‖_p^ν = (Σ u_l^p)^{ν/p} is a polynomial for even integer p
            // and integer ν/p.
            is_even_integer(p) && (exponent / p).is_integer() && !(exponent / p).is_negative()
        }
        ScalarFactor::CoordPower { mode, exponent, .. } => match mode {
            SignMode::Plain => true,
            SignMode::Abs => {
                exponent.is_integer() && exponent.numer().is_even() && !exponent.is_negative()
            }
            SignMode::Signed => {
                exponent.is_integer() && exponent.numer().is_odd() && !exponent.is_negative()
            }
        },
        ScalarFactor::PolyNormPower { p, exponent, .. } => {
            let s = exponent / Rat::from_integer((*p).into());
            exponent.is_zero() || (s.is_integer() && !s.is_negative())
        }
    }
}

fn is_even_integer(p: &Rat) -> bool {
    p.is_integer() && p.numer().is_even()
}

/// Reason a factor fails to be smooth at `x`, or `None` when it is smooth.
pub(crate) fn factor_smoothness_obstruction(factor: &ScalarFactor, x: &[f64]) -> Option<String> {
    if factor_is_polynomial(factor) {
        return None;
    }
    let scale = crate::linalg::norm(x).max(f64::MIN_POSITIVE);
    match factor {
        ScalarFactor::NormPower { matrix, p, .. } => {
            let arg = match matrix {
                None => x.to_vec(),
                Some(m) => m.matvec(x),
            };
            if is_even_integer(p) {
                // Smooth wherever the argument is nonzero.
                let a = crate::linalg::norm(&arg);
                let ref_scale = matrix_scale(matrix, x.len()) * scale;
                (a <= ZERO_THRESHOLD * ref_scale)
                    .then(|| "has a vanishing norm argument there".to_string())
            } else {
                // Σ|u_l|^p needs every entry away from zero.
                let ref_scale = matrix_scale(matrix, x.len()) * scale;
                arg.iter()
                    .position(|v| v.abs() <= ZERO_THRESHOLD * ref_scale)
                    .map(|l| format!("has a vanishing norm argument entry (row {})", l + 1))
            }
        }
        ScalarFactor::CoordPower { index, .. } => {
            (x[*index].abs() <= ZERO_THRESHOLD * scale)
                .then(|| format!("needs x_{} nonzero there", index + 1))
        }
        ScalarFactor::PolyNormPower { polys, .. } => {
            let good = polys.iter().any(|q| {
                let ref_scale = poly_scale(q, scale);
                q.eval(x).abs() > ZERO_THRESHOLD * ref_scale
            });
            (!good).then(|| "has a vanishing polynomial norm there".to_string())
        }
    }
}

fn matrix_scale(matrix: &Option<Mat>, dim: usize) -> f64 {
    match matrix {
        None => 1.0,
        Some(m) => m.max_abs().max(f64::MIN_POSITIVE) * (dim as f64).sqrt(),
    }
}

fn poly_scale(q: &Poly, x_scale: f64) -> f64 {
    let deg = q.total_degree().unwrap_or(0);
    q.max_abs_coeff().max(f64::MIN_POSITIVE) * x_scale.powi(deg as i32)
}

/// Checks every factor of every known component at `x` (normally the
/// asymptotic direction ξ*).
pub fn smoothness_domain_check(spec: &NonlinearitySpec, x: &[f64]) -> SmoothnessReport {
    let mut obstructions = Vec::new();
    for c in spec.components() {
        for (ti, t) in c.terms.iter().enumerate() {
            for factor in &t.factors {
                if let Some(reason) = factor_smoothness_obstruction(factor, x) {
                    obstructions.push(Obstruction {
                        component_degree: crate::rational::fmt_rat(&c.degree),
                        term_index: ti,
                        factor: factor.to_string(),
                        reason,
                    });
                }
            }
        }
    }
    SmoothnessReport {
        applicable: obstructions.is_empty(),
        obstructions,
        point: x.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};
    use crate::termlang::parser::parse_nonlinearity;
    use crate::termlang::SpecMode;

    #[test]
    fn polynomial_factors_are_always_smooth() {
        let even_norm = ScalarFactor::NormPower {
            matrix: None,
            p: rat_int(2),
            exponent: rat_int(4),
        };
        assert!(factor_is_polynomial(&even_norm));
        let abs_even = ScalarFactor::CoordPower {
            index: 0,
            mode: SignMode::Abs,
            exponent: rat_int(2),
        };
        assert!(factor_is_polynomial(&abs_even));
        let signed_odd = ScalarFactor::CoordPower {
            index: 0,
            mode: SignMode::Signed,
            exponent: rat_int(3),
        };
        assert!(factor_is_polynomial(&signed_odd));
        let frac = ScalarFactor::NormPower {
            matrix: None,
            p: rat_int(2),
            exponent: rat(1, 3),
        };
        assert!(!factor_is_polynomial(&frac));
    }

    #[test]
    fn signed_power_blocked_on_its_axis() {
        let spec = parse_nonlinearity(
            "[-sgnpow(x_2, 1/3) * x_1^2, 0]",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        let report = smoothness_domain_check(&spec, &[1.0, 0.0]);
        assert!(!report.applicable);
        assert!(report.obstructions[0].factor.contains("sgnpow(x_2, 1/3)"));
        let ok = smoothness_domain_check(&spec, &[1.0, 0.5]);
        assert!(ok.applicable);
    }

    #[test]
    fn even_norm_smooth_away_from_origin() {
        let spec = parse_nonlinearity("-norm2(x)^{1/2} * x", 2, SpecMode::Finite).unwrap();
        let report = smoothness_domain_check(&spec, &[0.6, -0.8]);
        assert!(report.applicable);
    }

    #[test]
    fn odd_lpnorm_needs_entrywise_nonzero() {
        let spec = parse_nonlinearity("-lpnorm(3; x)^{1/2} * x", 2, SpecMode::Finite).unwrap();
        let report = smoothness_domain_check(&spec, &[1.0, 0.0]);
        assert!(!report.applicable);
        assert!(report.obstructions[0].reason.contains("row 2"));
        assert!(smoothness_domain_check(&spec, &[0.6, 0.8]).applicable);
    }

    #[test]
    fn report_display_names_the_factor() {
        let spec = parse_nonlinearity(
            "[-sgnpow(x_2, 1/3) * x_1^2, 0]",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        let report = smoothness_domain_check(&spec, &[1.0, 0.0]);
        let text = report.to_string();
        assert!(text.contains("sgnpow(x_2, 1/3)"), "{text}");
    }
}
