//! Exact rational arithmetic helpers.
//!
//! Decay exponents, homogeneity degrees, and lattice elements are kept as
//! arbitrary-precision rationals throughout; floats only appear at the
//! boundary (trajectory data, polynomial coefficients). This module wraps
//! [`num_rational::BigRational`] with parsing, formatting, float snapping,
//! and serde support in the `"p/q"` string form.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Write as _;

/// Exact rational scalar used for all degree and exponent bookkeeping.
pub type Rat = BigRational;

/// Rational from an integer.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational `n/d`. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Exact value of an IEEE-754 double as a rational. `x` must be finite.
pub fn rat_from_f64(x: f64) -> Rat {
    Rat::from_float(x).expect("finite float")
}

/// Nearest-double conversion. Values outside the double range saturate.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Formats a rational as `p/q`, or just `p` when the denominator is one.
pub fn fmt_rat(r: &Rat) -> String {
    let mut s = String::new();
    if r.denom().is_one() {
        let _ = write!(s, "{}", r.numer());
    } else {
        let _ = write!(s, "{}/{}", r.numer(), r.denom());
    }
    s
}

/// Parses `p/q`, an integer, or a decimal literal (converted exactly).
///
/// Accepted forms: `4/3`, `-7`, `0.25`, `2.5e-1`. Decimal and scientific
/// forms are converted digit-exactly, never through a float.
pub fn parse_rat(input: &str) -> Result<Rat, String> {
    let s = input.trim();
    if s.is_empty() {
        return Err("empty rational literal".into());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in `{s}`"))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in `{s}`"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(Rat::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Result<Rat, String> {
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..]
                .parse()
                .map_err(|_| format!("bad exponent in `{s}`"))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let negative = int_part.starts_with('-');
    let digits: String = int_part
        .trim_start_matches(['+', '-'])
        .chars()
        .chain(frac_part.chars())
        .collect();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad rational literal `{s}`"));
    }
    let mut numer: BigInt = digits.parse().expect("digit string");
    if negative {
        numer = -numer;
    }
    let shift = exp10 - frac_part.len() as i64;
    let ten = BigInt::from(10);
    Ok(if shift >= 0 {
        Rat::from_integer(numer * ten.pow(shift as u32))
    } else {
        Rat::new(numer, ten.pow((-shift) as u32))
    })
}

/// Best rational approximation of `x` within `tol`, by continued fractions.
///
/// Walks the continued-fraction convergents of `x` and returns the first one
/// within `tol`. Returns `None` when `x` is not finite or when the first
/// adequate convergent needs a denominator larger than `max_denom` (the
/// value is then not usefully rational at this tolerance).
pub fn snap_to_rational(x: f64, tol: f64, max_denom: u64) -> Option<Rat> {
    if !x.is_finite() {
        return None;
    }
    // Convergents p_k/q_k of the continued fraction of |x|.
    let target = x.abs();
    let (mut p0, mut q0) = (BigInt::one(), BigInt::zero());
    let (mut p1, mut q1) = (BigInt::from(target.floor() as i64), BigInt::one());
    let mut frac = target - target.floor();
    for _ in 0..64 {
        let approx = rat_to_f64(&Rat::new(p1.clone(), q1.clone()));
        if (approx - target).abs() <= tol {
            if q1 > BigInt::from(max_denom) {
                return None;
            }
            let r = Rat::new(p1, q1);
            return Some(if x < 0.0 { -r } else { r });
        }
        if frac.abs() < f64::MIN_POSITIVE {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = BigInt::from(a as i64);
        let p2 = &a * &p1 + &p0;
        let q2 = &a * &q1 + &q0;
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    None
}

/// Serde adapter storing a [`Rat`] as its `p/q` string form.
pub mod rat_string {
    use super::{fmt_rat, parse_rat, Rat};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&fmt_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(de)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Rat>` in `p/q` string form.
pub mod rat_vec_string {
    use super::{fmt_rat, parse_rat, Rat};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rat], ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_seq(v.iter().map(fmt_rat))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Rat>, D::Error> {
        let strings = Vec::<String>::deserialize(de)?;
        strings
            .iter()
            .map(|s| parse_rat(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// True when the rational is an integer.
pub fn is_integer(r: &Rat) -> bool {
    r.denom().is_one()
}

/// The rational as `u32` if it is a small nonnegative integer.
pub fn as_u32(r: &Rat) -> Option<u32> {
    if !is_integer(r) || r.is_negative() {
        return None;
    }
    let (sign, digits) = r.numer().to_u32_digits();
    match (sign, digits.len()) {
        (Sign::NoSign, _) => Some(0),
        (Sign::Plus, 1) => Some(digits[0]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_and_decimal_forms() {
        assert_eq!(parse_rat("4/3").unwrap(), rat(4, 3));
        assert_eq!(parse_rat("-7").unwrap(), rat_int(-7));
        assert_eq!(parse_rat("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rat("2.5e-1").unwrap(), rat(1, 4));
        assert_eq!(parse_rat("-1.5e2").unwrap(), rat_int(-150));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("abc").is_err());
    }

    #[test]
    fn formats_integers_without_denominator() {
        assert_eq!(fmt_rat(&rat(4, 3)), "4/3");
        assert_eq!(fmt_rat(&rat(8, 4)), "2");
        assert_eq!(fmt_rat(&rat(-3, 9)), "-1/3");
    }

    #[test]
    fn snaps_floats_to_small_rationals() {
        let third = 1.0 / 3.0;
        assert_eq!(snap_to_rational(third, 1e-9, 1_000_000).unwrap(), rat(1, 3));
        assert_eq!(snap_to_rational(2.0, 1e-9, 1_000_000).unwrap(), rat_int(2));
        let x = 1.0 + 1e-3;
        // At a loose tolerance the convergent 1 suffices.
        assert_eq!(
            snap_to_rational(x, 1e-2, 1_000_000).unwrap(),
            rat_int(1)
        );
        // An irrational-looking value has no small-denominator convergent
        // at tight tolerance.
        assert!(snap_to_rational(std::f64::consts::SQRT_2, 1e-12, 1000).is_none());
    }

    #[test]
    fn snap_respects_sign() {
        assert_eq!(
            snap_to_rational(-0.2, 1e-9, 1000).unwrap(),
            rat(-1, 5)
        );
    }

    #[test]
    fn float_round_trip_is_exact() {
        let r = rat_from_f64(0.1);
        assert_eq!(rat_to_f64(&r), 0.1);
        assert_ne!(r, rat(1, 10), "0.1 is not exactly 1/10 in binary");
    }
}
