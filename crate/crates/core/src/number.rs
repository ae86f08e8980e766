//! Exact rational numbers used for bindings, timestamps, costs and
//! probabilities.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exact rational number.
///
/// Decimal literals such as `0.93` parse to `93/100` exactly, so
/// comparisons against thresholds never suffer from binary rounding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Number(Ratio<i128>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid number literal `{0}`")]
pub struct NumberParseError(pub String);

impl Number {
    pub const ZERO: Number = Number(Ratio::new_raw(0, 1));
    pub const ONE: Number = Number(Ratio::new_raw(1, 1));

    pub fn new(numer: i128, denom: i128) -> Number {
        Number(Ratio::new(numer, denom))
    }

    pub fn int(v: i64) -> Number {
        Number(Ratio::from_integer(v as i128))
    }

    pub fn ratio(&self) -> Ratio<i128> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Number {
        Number(self.0.abs())
    }

    pub fn clamp_unit(self) -> Number {
        self.max(Number::ZERO).min(Number::ONE)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Converts a float through its shortest round-trip decimal form, so
    /// `0.1_f64` becomes exactly `1/10`. Non-finite input yields `None`.
    pub fn from_f64(v: f64) -> Option<Number> {
        if !v.is_finite() {
            return None;
        }
        format!("{v}").parse().ok()
    }
}

impl FromStr for Number {
    type Err = NumberParseError;

    /// Accepts `[-+]digits[.digits][e[-+]digits]` and `a/b`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || NumberParseError(s.to_string());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| err())?;
            let d: i128 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Number(Ratio::new(n, d)));
        }
        let (neg, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let (mantissa, exp) = match body.find(['e', 'E']) {
            Some(i) => {
                let e: i32 = body[i + 1..].parse().map_err(|_| err())?;
                (&body[..i], e)
            }
            None => (body, 0),
        };
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let digits = format!("{int_part}{frac_part}");
        let mut numer: i128 = digits.parse().map_err(|_| err())?;
        let scale = exp - frac_part.len() as i32;
        if scale.unsigned_abs() > 30 {
            return Err(err());
        }
        let pow = 10i128.pow(scale.unsigned_abs());
        let mut denom = 1i128;
        if scale >= 0 {
            numer = numer.checked_mul(pow).ok_or_else(err)?;
        } else {
            denom = pow;
        }
        if neg {
            numer = -numer;
        }
        Ok(Number(Ratio::new(numer, denom)))
    }
}

impl fmt::Display for Number {
    /// Integers print bare, terminating decimals print exactly, anything
    /// else prints as `numer/denom`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            return write!(f, "{}", self.0.numer());
        }
        let mut d = *self.0.denom();
        let mut places = 0u32;
        while d % 2 == 0 || d % 5 == 0 {
            if d % 2 == 0 {
                d /= 2;
            }
            if d % 5 == 0 {
                d /= 5;
            }
            places += 1;
        }
        if d != 1 {
            return write!(f, "{}/{}", self.0.numer(), self.0.denom());
        }
        // Terminating decimal: scale to an integer over 10^places.
        let mut scaled = self.0 * Ratio::from_integer(10i128.pow(places));
        while !scaled.is_integer() {
            places += 1;
            scaled = self.0 * Ratio::from_integer(10i128.pow(places));
        }
        let n = scaled.to_integer();
        let sign = if n < 0 { "-" } else { "" };
        let digits = n.unsigned_abs().to_string();
        let places = places as usize;
        let padded = format!("{digits:0>width$}", width = places + 1);
        let (int, frac) = padded.split_at(padded.len() - places);
        let frac = frac.trim_end_matches('0');
        write!(f, "{sign}{int}.{frac}")
    }
}

impl fmt::Debug for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<i64> for Number {
    fn from(v: i64) -> Self {
        Number::int(v)
    }
}

impl From<u32> for Number {
    fn from(v: u32) -> Self {
        Number::int(v as i64)
    }
}

impl From<usize> for Number {
    fn from(v: usize) -> Self {
        Number(Ratio::from_integer(v as i128))
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Number {
            type Output = Number;
            fn $m(self, rhs: Number) -> Number {
                Number(self.0.$m(rhs.0))
            }
        }
    };
}
binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Number {
    type Output = Number;
    fn neg(self) -> Number {
        Number(-self.0)
    }
}

impl Sum for Number {
    fn sum<I: Iterator<Item = Number>>(iter: I) -> Number {
        iter.fold(Number::ZERO, |a, b| a + b)
    }
}

impl Zero for Number {
    fn zero() -> Self {
        Number::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for Number {
    fn one() -> Self {
        Number::ONE
    }
}

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_integer() {
            if let Ok(v) = i64::try_from(self.0.to_integer()) {
                return s.serialize_i64(v);
            }
        }
        let text = self.to_string();
        if text.contains('/') {
            s.serialize_str(&text)
        } else {
            s.serialize_f64(self.to_f64())
        }
    }
}

struct NumberVisitor;

impl Visitor<'_> for NumberVisitor {
    type Value = Number;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a numeric string such as \"1/3\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Number, E> {
        Ok(Number::int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Number, E> {
        Ok(Number(Ratio::from_integer(v as i128)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Number, E> {
        Number::from_f64(v).ok_or_else(|| E::custom("non-finite number"))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Number, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Number, D::Error> {
        d.deserialize_any(NumberVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!("0.93".parse::<Number>().unwrap(), Number::new(93, 100));
        assert_eq!("-1.5".parse::<Number>().unwrap(), Number::new(-3, 2));
        assert_eq!("2e2".parse::<Number>().unwrap(), Number::int(200));
        assert_eq!("1/3".parse::<Number>().unwrap(), Number::new(1, 3));
        assert_eq!(".5".parse::<Number>().unwrap(), Number::new(1, 2));
        assert!("abc".parse::<Number>().is_err());
        assert!("1/0".parse::<Number>().is_err());
        assert!("".parse::<Number>().is_err());
        assert!("-".parse::<Number>().is_err());
    }

    #[test]
    fn float_conversion_uses_shortest_repr() {
        assert_eq!(Number::from_f64(0.1).unwrap(), Number::new(1, 10));
        assert_eq!(Number::from_f64(0.05).unwrap(), Number::new(1, 20));
        assert!(Number::from_f64(f64::NAN).is_none());
    }

    #[test]
    fn display_round_trips() {
        for s in ["150", "-3", "0.125", "-0.5", "1/3", "12.04"] {
            let n: Number = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
    }

    #[test]
    fn threshold_arithmetic_is_exact() {
        let alpha: Number = "0.95".parse().unwrap();
        let beta: Number = "0.05".parse().unwrap();
        assert_eq!(alpha - beta, "0.9".parse().unwrap());
    }
}
