//! Quantities written either as bare numbers in a field's default unit or
//! as strings such as `"17.12 MHz"`, `"404 nW"`, `"78.66 um"`.

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Qty {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    /// Ordinary frequency ν = Ω/2π.
    Frequency,
    Power,
    Length,
    Temperature,
    Mass,
    /// Field amplitude.
    Field,
    Dimensionless,
}

/// SI scale of each accepted unit symbol.
fn unit_scale(dim: Dim, unit: &str) -> Option<f64> {
    let s = match (dim, unit) {
        (Dim::Frequency, "Hz") => 1.0,
        (Dim::Frequency, "kHz") => 1e3,
        (Dim::Frequency, "MHz") => 1e6,
        (Dim::Frequency, "GHz") => 1e9,
        (Dim::Power, "W") => 1.0,
        (Dim::Power, "mW") => 1e-3,
        (Dim::Power, "uW" | "µW" | "μW") => 1e-6,
        (Dim::Power, "nW") => 1e-9,
        (Dim::Power, "pW") => 1e-12,
        (Dim::Length, "m") => 1.0,
        (Dim::Length, "cm") => 1e-2,
        (Dim::Length, "mm") => 1e-3,
        (Dim::Length, "um" | "µm" | "μm") => 1e-6,
        (Dim::Length, "nm") => 1e-9,
        (Dim::Temperature, "K") => 1.0,
        (Dim::Mass, "kg") => 1.0,
        (Dim::Mass, "g") => 1e-3,
        (Dim::Field, "V/m") => 1.0,
        (Dim::Field, "mV/cm") => 0.1,
        (Dim::Field, "uV/cm" | "µV/cm" | "μV/cm") => 1e-4,
        (Dim::Field, "nV/cm") => 1e-7,
        _ => return None,
    };
    Some(s)
}

/// Parses `q` and returns its value expressed in `unit` (same dimension).
pub fn parse_in(q: &Qty, dim: Dim, unit: &str, field: &str) -> Result<f64, CliError> {
    let value = match q {
        Qty::Number(x) => *x,
        Qty::Text(text) => {
            let text = text.trim();
            let split = text
                .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
                .unwrap_or(text.len());
            let (number, symbol) = text.split_at(split);
            let number: f64 = number
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{field}: cannot read a number from {text:?}")))?;
            let symbol = symbol.trim();
            if symbol.is_empty() || dim == Dim::Dimensionless {
                if !symbol.is_empty() {
                    return Err(CliError::config(format!("{field}: expected a plain number, got {text:?}")));
                }
                number
            } else {
                let from = unit_scale(dim, symbol)
                    .ok_or_else(|| CliError::config(format!("{field}: unknown unit {symbol:?} in {text:?}")))?;
                let to = unit_scale(dim, unit).expect("canonical unit");
                number * from / to
            }
        }
    };
    if !value.is_finite() {
        return Err(CliError::config(format!("{field}: value must be finite")));
    }
    Ok(value)
}
