//! Optional unit suffixes for SI inputs: `"100 uW"`, `"5 MHz"`, `"300 um"`.
//!
//! A bare number is taken to be in SI base units already. Frequencies given
//! in Hz are converted to angular frequency (rad/s).

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Dimensionless,
    Mass,
    Length,
    Area,
    Time,
    Power,
    Temperature,
    /// Angular frequency or rate (rad/s, 1/s).
    Rate,
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dim::Dimensionless => "a plain number",
            Dim::Mass => "a mass",
            Dim::Length => "a length",
            Dim::Area => "an area",
            Dim::Time => "a time",
            Dim::Power => "a power",
            Dim::Temperature => "a temperature",
            Dim::Rate => "an angular frequency",
        };
        f.write_str(s)
    }
}

/// A value as written in the scenario: SI number, or number plus unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "f64")]
pub struct Quantity {
    pub si: f64,
    /// `None` for a bare number.
    pub dim: Option<Dim>,
}

impl From<Quantity> for f64 {
    fn from(q: Quantity) -> f64 {
        q.si
    }
}

impl Quantity {
    /// SI value, checking the unit (if any) against the expected dimension.
    pub fn expect(&self, key: &str, dim: Dim) -> Result<f64, String> {
        match self.dim {
            Some(d) if d != dim => Err(format!("{key}: expected {dim}, got {d}")),
            _ => Ok(self.si),
        }
    }
}

/// Prefix and its power of ten.
const PREFIXES: &[(&str, i32)] = &[
    ("p", -12),
    ("n", -9),
    ("u", -6),
    ("µ", -6),
    ("μ", -6),
    ("m", -3),
    ("k", 3),
    ("M", 6),
    ("G", 9),
];

/// `(symbol, power of ten, extra factor, dimension, power applied to the prefix)`
const UNITS: &[(&str, i32, f64, Dim, i32)] = &[
    ("W", 0, 1.0, Dim::Power, 1),
    ("m^2", 0, 1.0, Dim::Area, 2),
    ("m2", 0, 1.0, Dim::Area, 2),
    ("m", 0, 1.0, Dim::Length, 1),
    ("s", 0, 1.0, Dim::Time, 1),
    ("Hz", 0, 2.0 * PI, Dim::Rate, 1),
    ("rad/s", 0, 1.0, Dim::Rate, 1),
    ("1/s", 0, 1.0, Dim::Rate, 1),
    ("K", 0, 1.0, Dim::Temperature, 1),
    ("g", -3, 1.0, Dim::Mass, 1),
];

fn lookup(unit: &str) -> Option<(i32, f64, Dim)> {
    for &(sym, exp, factor, dim, pow) in UNITS {
        if unit == sym {
            return Some((exp, factor, dim));
        }
        for &(p, scale) in PREFIXES {
            if unit.strip_prefix(p) == Some(sym) {
                return Some((exp + scale * pow, factor, dim));
            }
        }
    }
    None
}

/// `v · 10^exp`, rounded once so that "100 uW" is exactly `1e-4`.
fn shift_decimal(v: f64, exp: i32) -> f64 {
    let repr = format!("{v:e}");
    let (mantissa, e) = repr.split_once('e').expect("`{:e}` always has an exponent");
    let e: i32 = e.parse().expect("`{:e}` exponent is an integer");
    format!("{mantissa}e{}", e + exp).parse().unwrap_or(f64::NAN)
}

pub fn parse_quantity(text: &str) -> Result<Quantity, String> {
    let t = text.trim();
    let split = t
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot read a number from {text:?}"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(Quantity { si: value, dim: None });
    }
    let (exp, factor, dim) = lookup(unit).ok_or_else(|| format!("unknown unit {unit:?} in {text:?}"))?;
    Ok(Quantity {
        si: shift_decimal(value, exp) * factor,
        dim: Some(dim),
    })
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Quantity;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a string such as \"100 uW\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
                Ok(Quantity { si: v, dim: None })
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Quantity, E> {
                parse_quantity(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn si(s: &str) -> f64 {
        parse_quantity(s).unwrap().si
    }

    #[test]
    fn suffixes() {
        assert_eq!(si("100 uW"), 100e-6);
        assert_eq!(si("0.1mW"), 0.1e-3);
        assert_eq!(si("5 MHz"), 2.0 * PI * 5e6);
        assert_eq!(si("300 um"), 300e-6);
        assert_eq!(si("1e-12 kg"), 1e-12);
        assert_eq!(si("10 pg"), 10e-15);
        assert_eq!(si("200 mK"), 0.2);
        assert_eq!(si("2 us"), 2e-6);
        assert!((si("1 um^2") - 1e-12).abs() < 1e-27);
        assert_eq!(si("1e-3"), 1e-3);
        assert_eq!(parse_quantity("3 m").unwrap().dim, Some(Dim::Length));
    }

    #[test]
    fn milliwatts_and_watts_agree() {
        assert!((si("0.1 mW") - si("1e-4 W")).abs() < 1e-19);
    }

    #[test]
    fn errors() {
        assert!(parse_quantity("fast").is_err());
        assert!(parse_quantity("3 furlongs").is_err());
        let q = parse_quantity("3 W").unwrap();
        assert!(q.expect("cavity.length", Dim::Length).is_err());
        assert_eq!(q.expect("cavity.power", Dim::Power), Ok(3.0));
    }
}
