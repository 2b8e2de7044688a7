//! Nonnegative extended reals used for information quantities.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A nonnegative real number or `+inf`.
///
/// Products with infinity are deliberately not provided: the zero-times-infinity
/// cases are resolved by the conventions in [`crate::information`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Wraps a finite value. Panics on negative or NaN input.
    pub fn finite(value: f64) -> Self {
        assert!(
            value >= 0.0 && value.is_finite(),
            "ExtReal must be finite and nonnegative, got {value}"
        );
        ExtReal::Finite(value)
    }

    /// Maps `f64::INFINITY` to [`ExtReal::Infinite`].
    pub fn from_f64(value: f64) -> Self {
        if value == f64::INFINITY {
            ExtReal::Infinite
        } else {
            ExtReal::finite(value)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        !self.is_finite()
    }

    pub fn as_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn finite_value(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    /// Multiplies by a strictly positive finite scalar.
    pub fn scale(self, factor: f64) -> Self {
        assert!(factor > 0.0 && factor.is_finite());
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * factor),
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }
}

impl ExtReal {
    /// `factor * self` with `0 * inf = 0`, for residence times multiplying
    /// information values.
    pub fn scale_or_zero(self, factor: f64) -> Self {
        if factor == 0.0 {
            ExtReal::ZERO
        } else {
            self.scale(factor)
        }
    }
}

impl Default for ExtReal {
    fn default() -> Self {
        ExtReal::ZERO
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        let mut total = 0.0;
        for v in iter {
            match v {
                ExtReal::Finite(x) => total += x,
                ExtReal::Infinite => return ExtReal::Infinite,
            }
        }
        ExtReal::Finite(total)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::Infinite) => Some(Ordering::Less),
            (ExtReal::Infinite, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::Infinite, ExtReal::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

// JSON has no infinity literal: infinite values travel as the string "inf".
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => serializer.serialize_f64(*v),
            ExtReal::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtVisitor;

        impl Visitor<'_> for ExtVisitor {
            type Value = ExtReal;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
                if v >= 0.0 && v.is_finite() {
                    Ok(ExtReal::Finite(v))
                } else {
                    Err(E::custom(format!("invalid extended real {v}")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
                Ok(ExtReal::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
                match v {
                    "inf" | "Infinity" | "+inf" => Ok(ExtReal::Infinite),
                    _ => Err(E::custom(format!("invalid extended real {v:?}"))),
                }
            }
        }

        deserializer.deserialize_any(ExtVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_short_circuit() {
        let s: ExtReal = [ExtReal::finite(1.0), ExtReal::Infinite, ExtReal::finite(2.0)]
            .into_iter()
            .sum();
        assert_eq!(s, ExtReal::Infinite);
        assert_eq!(ExtReal::finite(1.5) + ExtReal::finite(2.0), ExtReal::Finite(3.5));
    }

    #[test]
    fn ordering_puts_infinity_last() {
        assert!(ExtReal::finite(1e300) < ExtReal::Infinite);
        assert!(ExtReal::finite(1.0) < ExtReal::finite(2.0));
    }

    #[test]
    #[should_panic]
    fn rejects_negative() {
        let _ = ExtReal::finite(-1.0);
    }

    #[test]
    fn json_round_trip() {
        let v = vec![ExtReal::finite(0.25), ExtReal::Infinite];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[0.25,"inf"]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
