//! The explicit Łojasiewicz exponent in exact and log scale.
//!
//! For a degree-`d` polynomial in `l` variables the exponent denominator
//! is `R(l, d) = d (3d - 3)^{l-1}`. The lift of the residual is a quartic
//! in `n (m + n - r)` variables, so the exponent attached to an instance
//! is `tau = 1 / R(n (m + n - r), 4) = 1 / (4 * 9^{n (m + n - r) - 1})`.
//! These quantities overflow or underflow doubles already at small
//! dimensions, so every value carries its base-10 logarithm and, when it
//! fits within a million decimal digits, an exact big-integer rendering.

use num_bigint::BigUint;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Cap on exact big-integer evaluation, in decimal digits.
const MAX_EXACT_DIGITS: u64 = 1_000_000;

/// A positive scalar carried in linear and base-10 logarithmic scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScalar {
    /// Double-precision value, or a marker when outside the normal range.
    pub linear: LinearValue,
    /// Base-10 logarithm; always finite.
    pub log10: f64,
    /// Exact decimal digits when the value is an integer small enough to
    /// materialize.
    pub exact_digits: Option<String>,
}

/// Linear-scale value of a [`LogScalar`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearValue {
    Finite(f64),
    /// Above the double-precision range; `log10` remains authoritative.
    Overflow,
    /// Below the normal double-precision range; `log10` remains authoritative.
    Underflow,
}

impl LogScalar {
    /// Linear value clamped into the representable double range.
    ///
    /// Underflowed exponents clamp to the smallest positive normal double,
    /// which keeps one-sided comparisons (`slope >= tau`) honest: they
    /// reduce to `slope > 0`.
    pub fn clamped_linear(&self) -> f64 {
        match self.linear {
            LinearValue::Finite(v) => v,
            LinearValue::Overflow => f64::MAX,
            LinearValue::Underflow => f64::MIN_POSITIVE,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.linear, LinearValue::Finite(_))
    }
}

impl Serialize for LinearValue {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LinearValue::Finite(v) => ser.serialize_f64(*v),
            LinearValue::Overflow => ser.serialize_str("overflow"),
            LinearValue::Underflow => ser.serialize_str("underflow"),
        }
    }
}

impl<'de> Deserialize<'de> for LinearValue {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = LinearValue;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a number or an \"overflow\"/\"underflow\" marker")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<LinearValue, E> {
                Ok(LinearValue::Finite(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<LinearValue, E> {
                Ok(LinearValue::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<LinearValue, E> {
                Ok(LinearValue::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<LinearValue, E> {
                match s {
                    "overflow" => Ok(LinearValue::Overflow),
                    "underflow" => Ok(LinearValue::Underflow),
                    other => Err(E::custom(format!("unknown marker {:?}", other))),
                }
            }
        }
        de.deserialize_any(V)
    }
}

/// `R(l, d) = d (3d - 3)^{l-1}` for `l >= 1`, `d >= 2`.
pub fn r_value(l: u64, d: u64) -> Result<LogScalar> {
    if l == 0 {
        return Err(Error::InvalidArgument("R(l, d) requires l >= 1".into()));
    }
    if d <= 1 {
        return Err(Error::InvalidArgument("R(l, d) requires d >= 2".into()));
    }
    let base = 3 * d - 3;
    let log10 = (d as f64).log10() + (l - 1) as f64 * (base as f64).log10();

    // digit count from the logarithm, before any big-integer work
    let digits = log10.floor() as u64 + 1;
    let exact_digits = if digits <= MAX_EXACT_DIGITS && l - 1 <= u32::MAX as u64 {
        let value = BigUint::from(d) * BigUint::from(base).pow((l - 1) as u32);
        Some(value.to_string())
    } else {
        None
    };

    let linear = if log10 > f64::MAX.log10() {
        LinearValue::Overflow
    } else if let Some(s) = exact_digits.as_ref().filter(|s| s.len() <= 15) {
        // 15-digit integers are exact in f64
        LinearValue::Finite(s.parse::<f64>().expect("decimal digits"))
    } else {
        LinearValue::Finite(10f64.powf(log10))
    };

    Ok(LogScalar { linear, log10, exact_digits })
}

/// Number of lift variables `n (m + n - r)` after normalizing to `m >= n`.
pub fn tau_variable_count(m: usize, n: usize, r: usize) -> Result<u64> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!(
            "dimensions must be positive, got {}x{}",
            m, n
        )));
    }
    if r > m.min(n) {
        return Err(Error::InvalidDimensions(format!(
            "rank bound {} exceeds min(m, n) = {}",
            r,
            m.min(n)
        )));
    }
    let (big, small) = (m.max(n) as u64, m.min(n) as u64);
    Ok(small * (big + small - r as u64))
}

/// The instance exponent `tau = 1 / R(n (m + n - r), 4)`.
pub fn tau(m: usize, n: usize, r: usize) -> Result<LogScalar> {
    let l = tau_variable_count(m, n, r)?;
    let r_val = r_value(l, 4)?;
    let log10 = -r_val.log10;
    let linear = if log10 < f64::MIN_POSITIVE.log10() {
        LinearValue::Underflow
    } else {
        match r_val.linear {
            LinearValue::Finite(v) => LinearValue::Finite(1.0 / v),
            // R overflowed while tau is still normal cannot happen: the
            // reciprocal of anything past f64::MAX is below MIN_POSITIVE.
            _ => LinearValue::Finite(10f64.powf(log10)),
        }
    };
    Ok(LogScalar { linear, log10, exact_digits: None })
}
