//! Exact decimal numbers for ground-truth answers.
//!
//! Answers are kept as rationals so that rendering `answer * 1.05` or parsing
//! `"1,234.5"` never goes through binary floating point.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a decimal number: {0:?}")]
pub struct ParseDecimalError(pub String);

/// An exact, finite decimal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimal(Ratio<i64>);

impl Decimal {
    pub const ZERO: Decimal = Decimal(Ratio::new_raw(0, 1));

    pub fn from_int(v: i64) -> Self {
        Decimal(Ratio::from_integer(v))
    }

    /// `numer / denom`; `denom` must be nonzero.
    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        Decimal(Ratio::new(numer, denom))
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn abs(&self) -> Self {
        Decimal(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn checked_mul(&self, other: &Decimal) -> Option<Decimal> {
        let n = self.0.numer().checked_mul(*other.0.numer())?;
        let d = self.0.denom().checked_mul(*other.0.denom())?;
        Some(Decimal(Ratio::new(n, d)))
    }

    pub fn checked_add(&self, other: &Decimal) -> Option<Decimal> {
        let (a, b) = (self.0, other.0);
        let n = a
            .numer()
            .checked_mul(*b.denom())?
            .checked_add(b.numer().checked_mul(*a.denom())?)?;
        let d = a.denom().checked_mul(*b.denom())?;
        Some(Decimal(Ratio::new(n, d)))
    }

    /// Parses a decimal after removing thousands separators, e.g. `"1,234"`.
    pub fn parse_lenient(s: &str) -> Result<Decimal, ParseDecimalError> {
        s.replace(',', "").trim().parse()
    }
}

impl From<i64> for Decimal {
    fn from(v: i64) -> Self {
        Decimal::from_int(v)
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    /// Accepts `[+-]?digits[.digits]` or `[+-]?.digits`; no exponents.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDecimalError(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > 15 {
            return Err(err());
        }
        let scale = 10i64.pow(frac_trimmed.len() as u32);
        let mut numer: i64 = 0;
        for b in int_part.bytes().chain(frac_trimmed.bytes()) {
            numer = numer
                .checked_mul(10)
                .and_then(|n| n.checked_add((b - b'0') as i64))
                .ok_or_else(err)?;
        }
        if neg {
            numer = -numer;
        }
        Ok(Decimal(Ratio::new(numer, scale)))
    }
}

impl fmt::Display for Decimal {
    /// Shortest exact decimal expansion; integers print without a point.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.0;
        if r.is_integer() {
            return write!(f, "{}", r.numer());
        }
        // denominators of parsed or scaled values only carry factors 2 and 5
        let mut d = *r.denom();
        let mut digits = 0u32;
        let (mut twos, mut fives) = (0u32, 0u32);
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        if d != 1 {
            return write!(f, "{}", self.to_f64());
        }
        digits += twos.max(fives);
        let scale = 10i128.pow(digits);
        let scaled = *r.numer() as i128 * scale / *r.denom() as i128;
        let sign = if scaled < 0 { "-" } else { "" };
        let a = scaled.unsigned_abs();
        let int = a / scale as u128;
        let frac = a % scale as u128;
        write!(f, "{sign}{int}.{frac:0width$}", width = digits as usize)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let text = match &v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(serde::de::Error::custom(format!("expected decimal, got {other}"))),
        };
        Decimal::parse_lenient(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!(Decimal::parse_lenient("1,234").unwrap(), Decimal::from_int(1234));
        assert_eq!("7".parse::<Decimal>().unwrap().to_string(), "7");
        assert_eq!("-3.50".parse::<Decimal>().unwrap().to_string(), "-3.5");
        assert_eq!(".25".parse::<Decimal>().unwrap().to_string(), "0.25");
        assert!("1e5".parse::<Decimal>().is_err());
        assert!("".parse::<Decimal>().is_err());
        assert!("abc".parse::<Decimal>().is_err());
        assert!(".".parse::<Decimal>().is_err());
    }

    #[test]
    fn scaled_values_stay_exact() {
        let a = Decimal::from_int(7);
        let up = a.checked_mul(&Decimal::from_ratio(21, 20)).unwrap();
        assert_eq!(up.to_string(), "7.35");
        let up = Decimal::from_int(100).checked_mul(&Decimal::from_ratio(23, 20)).unwrap();
        assert_eq!(up.to_string(), "115");
        let neg = Decimal::from_ratio(-1, 8);
        assert_eq!(neg.to_string(), "-0.125");
    }

    #[test]
    fn serde_accepts_numbers_and_strings() {
        let d: Decimal = serde_json::from_str("\"2,500\"").unwrap();
        assert_eq!(d, Decimal::from_int(2500));
        let d: Decimal = serde_json::from_str("12.5").unwrap();
        assert_eq!(d.to_string(), "12.5");
        assert_eq!(serde_json::to_string(&d).unwrap(), "\"12.5\"");
    }
}
