//! Exact rational helpers: parsing, formatting and float rationalization.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number used throughout the crate.
pub type Q = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RationalParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

fn parse_int(s: &str, whole: &str) -> Result<BigInt, RationalParseError> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(RationalParseError::Malformed(whole.to_string()));
    }
    s.parse::<BigInt>()
        .map_err(|_| RationalParseError::Malformed(whole.to_string()))
}

/// Parses `p/q`, an integer, or a finite decimal such as `0.25`.
pub fn parse_q(text: &str) -> Result<Q, RationalParseError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(RationalParseError::Empty);
    }
    if let Some((a, b)) = s.split_once('/') {
        let num = parse_int(a.trim(), s)?;
        let den_str = b.trim();
        if den_str.starts_with(['+', '-']) {
            return Err(RationalParseError::Malformed(s.to_string()));
        }
        let den = parse_int(den_str, s)?;
        if den.is_zero() {
            return Err(RationalParseError::ZeroDenominator(s.to_string()));
        }
        return Ok(Q::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let negative = int_part.starts_with('-');
        let int_digits = int_part.strip_prefix(['+', '-']).unwrap_or(int_part);
        if (int_digits.is_empty() && frac_part.is_empty())
            || !int_digits.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
            || frac_part.len() > 64
        {
            return Err(RationalParseError::Malformed(s.to_string()));
        }
        let digits = format!("{int_digits}{frac_part}");
        let num: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits
                .parse()
                .map_err(|_| RationalParseError::Malformed(s.to_string()))?
        };
        let den = num::pow(BigInt::from(10), frac_part.len());
        let v = Q::new(num, den);
        return Ok(if negative { -v } else { v });
    }
    Ok(Q::from_integer(parse_int(s, s)?))
}

/// Canonical text form: `p/q`, or `p` for integers.
pub fn fmt_q(v: &Q) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        if v.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Best rational approximation of `x` with denominator at most `cap` (continued fractions).
pub fn rationalize(x: f64, cap: u64) -> Q {
    if !x.is_finite() {
        return zero();
    }
    let negative = x < 0.0;
    let mut rem = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (0u128, 1u128, 1u128, 0u128);
    let cap = cap.max(1) as u128;
    for _ in 0..64 {
        let a = rem.floor();
        if a > 1e30 {
            break;
        }
        let a_int = a as u128;
        let p2 = a_int.saturating_mul(p1).saturating_add(p0);
        let q2 = a_int.saturating_mul(q1).saturating_add(q0);
        if q2 > cap {
            // semiconvergent check
            let t = (cap - q0) / q1.max(1);
            if t > 0 && q1 > 0 {
                let ps = t * p1 + p0;
                let qs = t * q1 + q0;
                let cand = ps as f64 / qs as f64;
                let prev = p1 as f64 / q1 as f64;
                if (cand - x.abs()).abs() < (prev - x.abs()).abs() {
                    p1 = ps;
                    q1 = qs;
                }
            }
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let frac = rem - a;
        if frac < 1e-15 {
            break;
        }
        rem = 1.0 / frac;
    }
    if q1 == 0 {
        return zero();
    }
    let v = Q::new(BigInt::from(p1), BigInt::from(q1));
    if negative {
        -v
    } else {
        v
    }
}

/// Simplest rational (smallest denominator) in the closed interval `[lo, hi]`.
pub fn simplest_between(lo: &Q, hi: &Q) -> Q {
    assert!(lo <= hi);
    if lo.is_negative() && hi.is_positive() || lo.is_zero() || hi.is_zero() {
        return zero();
    }
    if hi.is_negative() {
        return -simplest_between(&-hi.clone(), &-lo.clone());
    }
    // both strictly positive
    let fl = lo.floor();
    if fl == *lo {
        return lo.clone();
    }
    if &(fl.clone() + one()) <= hi {
        return fl + one();
    }
    // same integer part, recurse on reciprocals of fractional parts
    let a = lo.clone() - &fl;
    let b = hi.clone() - &fl;
    let inner = simplest_between(&(one() / b), &(one() / a));
    fl + one() / inner
}

/// Simplest rational within `tol` of `x`.
pub fn simplest_within(x: f64, tol: f64) -> Q {
    let center = rationalize(x, 1 << 40);
    let t = rationalize(tol.abs().max(1e-15), 1 << 50);
    simplest_between(&(center.clone() - &t), &(center + t))
}

/// Serde adapters encoding rationals as canonical strings.
pub mod serde_q {
    use super::*;
    use serde::de::{self, Deserializer, Visitor};
    use serde::ser::Serializer;
    use std::fmt;

    struct QVisitor;

    impl Visitor<'_> for QVisitor {
        type Value = Q;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a rational as \"p/q\" string or an integer")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Q, E> {
            parse_q(v).map_err(E::custom)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Q, E> {
            Ok(q(v))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Q, E> {
            Ok(Q::from_integer(BigInt::from(v)))
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<Q, E> {
            Err(E::custom(format!(
                "floating point literal {v} is not allowed; write rationals as \"p/q\" strings"
            )))
        }
    }

    pub fn serialize<S: Serializer>(v: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        d.deserialize_any(QVisitor)
    }

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(transparent)]
    pub struct QS(#[serde(with = "super::serde_q")] pub Q);

    pub mod vec {
        use super::*;
        use serde::{Deserialize, Serialize};

        pub fn serialize<S: Serializer>(v: &[Q], s: S) -> Result<S::Ok, S::Error> {
            let w: Vec<String> = v.iter().map(fmt_q).collect();
            w.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
            let w: Vec<QS> = Vec::deserialize(d)?;
            Ok(w.into_iter().map(|x| x.0).collect())
        }
    }

    pub mod mat {
        use super::*;
        use serde::{Deserialize, Serialize};

        pub fn serialize<S: Serializer>(v: &[Vec<Q>], s: S) -> Result<S::Ok, S::Error> {
            let w: Vec<Vec<String>> = v.iter().map(|r| r.iter().map(fmt_q).collect()).collect();
            w.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Q>>, D::Error> {
            let w: Vec<Vec<QS>> = Vec::deserialize(d)?;
            Ok(w.into_iter()
                .map(|r| r.into_iter().map(|x| x.0).collect())
                .collect())
        }
    }
}

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    let mut s = zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            s += x * y;
        }
    }
    s
}

pub fn sum(a: &[Q]) -> Q {
    a.iter().fold(zero(), |acc, x| acc + x)
}

pub fn sub_vec(a: &[Q], b: &[Q]) -> Vec<Q> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max0(v: Q) -> Q {
    if v.is_negative() {
        zero()
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_q("1/2").unwrap(), qf(1, 2));
        assert_eq!(parse_q(" -3/6 ").unwrap(), qf(-1, 2));
        assert_eq!(parse_q("7").unwrap(), q(7));
        assert_eq!(parse_q("0.25").unwrap(), qf(1, 4));
        assert_eq!(parse_q("-.5").unwrap(), qf(-1, 2));
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("1/-2").is_err());
        assert!(parse_q("a/b").is_err());
        assert!(parse_q("").is_err());
        assert!(parse_q(".").is_err());
        assert!(parse_q("1/2/3").is_err());
    }

    #[test]
    fn format_roundtrip() {
        for s in ["1/2", "-7/3", "0", "12"] {
            assert_eq!(fmt_q(&parse_q(s).unwrap()), s);
        }
    }

    #[test]
    fn rationalize_recovers_small_fractions() {
        assert_eq!(rationalize(0.5, 1_000_000), qf(1, 2));
        assert_eq!(rationalize(-1.0 / 3.0, 1_000_000), qf(-1, 3));
        assert_eq!(rationalize(31.0 / 20.0, 1_000_000), qf(31, 20));
        assert_eq!(rationalize(std::f64::consts::PI, 1000), qf(355, 113));
    }

    #[test]
    fn simplest_within_snaps() {
        assert_eq!(simplest_within(0.4982, 0.01), qf(1, 2));
        assert_eq!(simplest_within(0.55001, 0.001), qf(11, 20));
        assert_eq!(simplest_within(1e-9, 1e-6), zero());
        assert_eq!(simplest_within(-0.3334, 0.001), qf(-1, 3));
    }
}
