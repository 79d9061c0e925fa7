//! Parsing of unit-suffixed quantities in scenario files ("4 Mbit", "40 MHz").

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dim {
    Bits,
    Hertz,
    Seconds,
    Joules,
    Meters,
}

impl Dim {
    fn multiplier(self, unit: &str) -> Option<f64> {
        let m = match (self, unit) {
            (Dim::Bits, "bit" | "bits" | "b") => 1.0,
            (Dim::Bits, "kbit" | "kbits" | "kb") => 1e3,
            (Dim::Bits, "Mbit" | "Mbits" | "Mb") => 1e6,
            (Dim::Bits, "Gbit" | "Gbits" | "Gb") => 1e9,
            (Dim::Hertz, "Hz") => 1.0,
            (Dim::Hertz, "kHz") => 1e3,
            (Dim::Hertz, "MHz") => 1e6,
            (Dim::Hertz, "GHz") => 1e9,
            (Dim::Seconds, "s") => 1.0,
            (Dim::Seconds, "ms") => 1e-3,
            (Dim::Joules, "J") => 1.0,
            (Dim::Joules, "kJ") => 1e3,
            (Dim::Joules, "MJ") => 1e6,
            (Dim::Meters, "m") => 1.0,
            (Dim::Meters, "km") => 1e3,
            _ => return None,
        };
        Some(m)
    }
}

/// A number, or a string holding a number followed by a unit suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

impl Quantity {
    pub(crate) fn to_si(&self, dim: Dim, field: &str) -> Result<f64, String> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(s) => parse_with_unit(s, dim)
                .ok_or_else(|| format!("{field}: cannot interpret {s:?} as a {dim:?} quantity")),
        }
    }
}

fn parse_with_unit(s: &str, dim: Dim) -> Option<f64> {
    let s = s.trim();
    let split = s
        .char_indices()
        .find(|&(i, c)| {
            c.is_alphabetic() && !(matches!(c, 'e' | 'E') && i > 0 && next_is_exponent(s, i))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num.trim().parse().ok()?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Some(value);
    }
    Some(value * dim.multiplier(unit)?)
}

fn next_is_exponent(s: &str, i: usize) -> bool {
    let rest = &s[i + 1..];
    let rest = rest.strip_prefix(['+', '-']).unwrap_or(rest);
    rest.starts_with(|c: char| c.is_ascii_digit())
}
