//! Exact rational scalar used throughout the crate.
//!
//! All network data, flow rates and costs are held as arbitrary-precision
//! rationals so that conservation laws, complementarity conditions and cost
//! identities can be checked with equality instead of tolerances. Values
//! enter the system from JSON either as decimal literals ("0.125", "1e-3")
//! or as fraction strings ("3/8"); both parse losslessly.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

/// Crate-wide exact scalar.
pub type Rat = BigRational;

/// Rational from an integer.
pub fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational `n/d`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Rat {
    Rat::zero()
}

pub fn one() -> Rat {
    Rat::one()
}

/// Lossy view for reports and CSV output.
pub fn to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses a rational from a fraction string ("p/q") or a decimal literal
/// with optional exponent ("-12", "0.25", "4.1e-3").
pub fn parse_rat(text: &str) -> Result<Rat, Error> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_decimal(num)?;
        let d = parse_decimal(den)?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in '{s}'")));
        }
        return Ok(n / d);
    }
    parse_decimal(s)
}

fn parse_decimal(text: &str) -> Result<Rat, Error> {
    let s = text.trim();
    let bad = || Error::Parse(format!("invalid number '{s}'"));
    let (mantissa, exp10) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let joined = format!("{int_part}{frac_part}");
    let unsigned: BigInt = joined.parse().map_err(|_| bad())?;
    let shift = exp10 - frac_part.len() as i64;
    let mut value = Rat::from_integer(unsigned * BigInt::from(sign));
    let ten = BigInt::from(10);
    if shift > 0 {
        value *= Rat::from_integer(ten.pow(shift as u32));
    } else if shift < 0 {
        value /= Rat::from_integer(ten.pow((-shift) as u32));
    }
    Ok(value)
}

/// Parses a JSON value holding either a number literal or a string form.
pub fn rat_from_json(value: &serde_json::Value) -> Result<Rat, Error> {
    match value {
        serde_json::Value::Number(n) => parse_rat(&n.to_string()),
        serde_json::Value::String(s) => parse_rat(s),
        other => Err(Error::Parse(format!("expected number, got {other}"))),
    }
}

/// Exact absolute value.
pub fn rabs(x: &Rat) -> Rat {
    x.abs()
}

/// `max` that clones the larger operand.
pub fn rmax(a: &Rat, b: &Rat) -> Rat {
    if a >= b {
        a.clone()
    } else {
        b.clone()
    }
}
