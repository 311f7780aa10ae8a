//! Unit-tagged quantities. Everything is converted to SI (Hz for rates and
//! linewidths) as soon as it is read.

use std::fmt;

use glassecho::constants::BOLTZMANN;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

const ELECTRON_VOLT: f64 = 1.602_176_634e-19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Frequency,
    Field,
    Temperature,
    Energy,
    FrequencyPerField,
    Dimensionless,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Time => "time",
            Dimension::Frequency => "frequency",
            Dimension::Field => "magnetic field",
            Dimension::Temperature => "temperature",
            Dimension::Energy => "energy",
            Dimension::FrequencyPerField => "frequency per field",
            Dimension::Dimensionless => "dimensionless",
        };
        f.write_str(s)
    }
}

impl Dimension {
    /// Name written to unit rows of output files.
    pub fn si_symbol(self) -> &'static str {
        match self {
            Dimension::Time => "s",
            Dimension::Frequency => "Hz",
            Dimension::Field => "T",
            Dimension::Temperature => "K",
            Dimension::Energy => "J",
            Dimension::FrequencyPerField => "Hz/T",
            Dimension::Dimensionless => "1",
        }
    }
}

/// Conversion to SI. Sub-unit prefixes divide so that a decimal input such
/// as `50 ns` lands on the nearest double to `5e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Mul(f64),
    Div(f64),
}

impl Scale {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Mul(f) => v * f,
            Scale::Div(f) => v / f,
        }
    }
}

/// Conversion to SI for `unit`, which must measure `dim`.
pub fn to_si(unit: &str, dim: Dimension) -> Result<Scale, String> {
    let u = unit.trim();
    let factor = match dim {
        Dimension::Time => match u {
            "s" => Some(Scale::Mul(1.0)),
            "ms" => Some(Scale::Div(1e3)),
            "us" | "µs" | "μs" => Some(Scale::Div(1e6)),
            "ns" => Some(Scale::Div(1e9)),
            "ps" => Some(Scale::Div(1e12)),
            _ => None,
        },
        Dimension::Frequency => match u {
            "Hz" => Some(Scale::Mul(1.0)),
            "kHz" => Some(Scale::Mul(1e3)),
            "MHz" => Some(Scale::Mul(1e6)),
            "GHz" => Some(Scale::Mul(1e9)),
            _ => None,
        },
        Dimension::Field => match u {
            "T" => Some(Scale::Mul(1.0)),
            "mT" => Some(Scale::Div(1e3)),
            "G" => Some(Scale::Div(1e4)),
            _ => None,
        },
        Dimension::Temperature => match u {
            "K" => Some(Scale::Mul(1.0)),
            "mK" => Some(Scale::Div(1e3)),
            _ => None,
        },
        Dimension::Energy => match u {
            "J" => Some(Scale::Mul(1.0)),
            "eV" => Some(Scale::Mul(ELECTRON_VOLT)),
            "meV" => Some(Scale::Mul(1e-3 * ELECTRON_VOLT)),
            "ueV" | "µeV" | "μeV" => Some(Scale::Mul(1e-6 * ELECTRON_VOLT)),
            // energy quoted as E/k
            "K" => Some(Scale::Mul(BOLTZMANN)),
            "mK" => Some(Scale::Mul(1e-3 * BOLTZMANN)),
            _ => None,
        },
        Dimension::FrequencyPerField => match u {
            "Hz/T" => Some(Scale::Mul(1.0)),
            "kHz/T" => Some(Scale::Mul(1e3)),
            "MHz/T" => Some(Scale::Mul(1e6)),
            "GHz/T" => Some(Scale::Mul(1e9)),
            _ => None,
        },
        Dimension::Dimensionless => match u {
            "" | "1" | "-" => Some(Scale::Mul(1.0)),
            _ => None,
        },
    };
    factor.ok_or_else(|| format!("'{u}' is not a unit of {dim}"))
}

/// A number with an optional unit, as written in configs: `3.5`, or
/// `"50 ns"`. Bare numbers are taken as SI.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Option<String>,
}

impl Quantity {
    pub fn si(value: f64) -> Self {
        Self { value, unit: None }
    }

    pub fn with_unit(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: Some(unit.to_string()),
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        // the unit starts at the first letter that is not an exponent marker
        let split = s
            .char_indices()
            .find(|&(i, c)| {
                let exponent = matches!(c, 'e' | 'E')
                    && i > 0
                    && s[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+');
                c.is_alphabetic() && !exponent
            })
            .map(|(i, _)| i)
            .unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("cannot read a number from '{s}'"))?;
        let unit = unit.trim();
        Ok(Self {
            value,
            unit: (!unit.is_empty()).then(|| unit.to_string()),
        })
    }

    /// Value in SI units of `dim`.
    pub fn get(&self, dim: Dimension) -> Result<f64, String> {
        match &self.unit {
            None => Ok(self.value),
            Some(u) => Ok(to_si(u, dim)?.apply(self.value)),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.unit {
            Some(u) => write!(f, "{} {u}", self.value),
            None => write!(f, "{}", self.value),
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.unit {
            None => s.serialize_f64(self.value),
            Some(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Quantity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"50 ns\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
                Ok(Quantity::si(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
                Ok(Quantity::si(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
                Ok(Quantity::si(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Quantity, E> {
                Quantity::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_units() {
        assert_eq!(Quantity::parse("50 ns").unwrap(), Quantity::with_unit(50.0, "ns"));
        assert_eq!(Quantity::parse("1.5e-3ms").unwrap(), Quantity::with_unit(1.5e-3, "ms"));
        assert_eq!(Quantity::parse("2E+2 mT").unwrap(), Quantity::with_unit(200.0, "mT"));
        assert_eq!(Quantity::parse("3µs").unwrap(), Quantity::with_unit(3.0, "µs"));
        assert_eq!(Quantity::parse(" 7 ").unwrap(), Quantity::si(7.0));
        assert!(Quantity::parse("ns").is_err());
    }

    #[test]
    fn converts_to_si() {
        let q = Quantity::parse("50 ns").unwrap();
        assert_eq!(q.get(Dimension::Time).unwrap(), 50e-9);
        assert_eq!(Quantity::parse("0.376 MHz").unwrap().get(Dimension::Frequency).unwrap(), 376_000.0);
        assert_eq!(to_si("K", Dimension::Energy).unwrap(), Scale::Mul(BOLTZMANN));
        let err = Quantity::parse("2 T").unwrap().get(Dimension::Time).unwrap_err();
        assert!(err.contains("not a unit of time"), "{err}");
    }
}
