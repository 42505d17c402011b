//! Exact rational arithmetic shared by the gain, metric, and reward code.
//!
//! Values are carried as [`Ratio`] internally and cross the JSON boundary as
//! decimals. Deserialization goes through the shortest round-trip decimal
//! form of the parsed `f64`, so a configured `0.8` becomes exactly `4/5`.

use num::bigint::BigInt;
use num::traits::{One, ToPrimitive, Zero};
use num::BigRational;
use serde::{Deserialize, Deserializer, Serializer};

pub type Ratio = BigRational;

pub fn ratio(numer: i64, denom: i64) -> Ratio {
    Ratio::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(n: i64) -> Ratio {
    Ratio::from_integer(BigInt::from(n))
}

pub fn zero() -> Ratio {
    Ratio::zero()
}

pub fn one() -> Ratio {
    Ratio::one()
}

pub fn to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Parses a plain decimal literal (`"0.8"`, `"-1.25"`, `"3"`, `"1e-3"`) exactly.
pub fn parse_decimal(text: &str) -> Option<Ratio> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = match digits.split_once('.') {
        Some((w, f)) => (w, f),
        None => (digits, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{whole}{frac}");
    let numer: BigInt = if all_digits.is_empty() { BigInt::zero() } else { all_digits.parse().ok()? };
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Ratio::from_integer(numer);
    if scale >= 0 {
        value *= Ratio::from_integer(num::pow(ten, scale as usize));
    } else {
        value /= Ratio::from_integer(num::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

/// Exact rational for a finite `f64` as written in its shortest decimal form.
pub fn from_f64_decimal(value: f64) -> Option<Ratio> {
    if !value.is_finite() {
        return None;
    }
    parse_decimal(&format!("{value:?}"))
}

/// Serde adapter: a [`Ratio`] on the wire as a JSON number.
pub mod as_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Ratio, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(to_f64(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio, D::Error> {
        let v = f64::deserialize(d)?;
        from_f64_decimal(v).ok_or_else(|| serde::de::Error::custom("non-finite number"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_exactly() {
        assert_eq!(parse_decimal("0.8"), Some(ratio(4, 5)));
        assert_eq!(parse_decimal("0.7"), Some(ratio(7, 10)));
        assert_eq!(parse_decimal("-1.25"), Some(ratio(-5, 4)));
        assert_eq!(parse_decimal("3"), Some(int(3)));
        assert_eq!(parse_decimal("1e-3"), Some(ratio(1, 1000)));
        assert_eq!(parse_decimal(".5"), Some(ratio(1, 2)));
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(parse_decimal(""), None);
    }

    #[test]
    fn f64_goes_through_shortest_decimal() {
        assert_eq!(from_f64_decimal(0.2), Some(ratio(1, 5)));
        assert_eq!(from_f64_decimal(1.0), Some(int(1)));
        assert_eq!(from_f64_decimal(f64::NAN), None);
    }
}
