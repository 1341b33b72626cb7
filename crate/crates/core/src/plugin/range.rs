use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed threshold range {0:?}")]
pub struct MalformedRange(pub String);

/// Threshold range in the plugin convention: `N`, `N:`, `~:N`, `A:B`,
/// each optionally prefixed by `@` to alert inside instead of outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRange<F> {
    pub low: F,
    pub high: F,
    pub inverted: bool,
}

impl<F: Scalar> ThresholdRange<F> {
    pub fn new(low: F, high: F, inverted: bool) -> Result<Self, MalformedRange> {
        if low.is_nan() || high.is_nan() || low > high {
            return Err(MalformedRange(format!("{low}:{high}")));
        }
        Ok(ThresholdRange { low, high, inverted })
    }

    pub fn parse(text: &str) -> Result<Self, MalformedRange> {
        let bad = || MalformedRange(text.to_string());
        let (inverted, body) = match text.strip_prefix('@') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (low, high) = match body.split_once(':') {
            None => (F::zero(), parse_number(body).ok_or_else(bad)?),
            Some((lo, hi)) => {
                let low = match lo {
                    "~" => F::neg_infinity(),
                    _ => parse_number(lo).ok_or_else(bad)?,
                };
                let high = match hi {
                    "" if lo != "~" => F::infinity(),
                    _ => parse_number(hi).ok_or_else(bad)?,
                };
                (low, high)
            }
        };
        Self::new(low, high, inverted).map_err(|_| bad())
    }

    /// Whether `value` triggers an alert.
    pub fn alerts(&self, value: F) -> bool {
        let inside = self.low <= value && value <= self.high;
        inside == self.inverted
    }
}

fn parse_number<F: Scalar>(s: &str) -> Option<F> {
    let plausible = !s.is_empty()
        && s.chars().any(|c| c.is_ascii_digit())
        && s
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !plausible {
        return None;
    }
    s.parse::<F>().ok().filter(|v| v.is_finite())
}

impl<F: Scalar> fmt::Display for ThresholdRange<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverted {
            f.write_str("@")?;
        }
        match (self.low.is_infinite(), self.high.is_infinite()) {
            (true, _) => write!(f, "~:{}", self.high),
            (false, true) => write!(f, "{}:", self.low),
            (false, false) if self.low == F::zero() && self.low.is_sign_positive() => {
                write!(f, "{}", self.high)
            }
            (false, false) => write!(f, "{}:{}", self.low, self.high),
        }
    }
}

impl<F: Scalar> Serialize for ThresholdRange<F> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de, F: Scalar> Deserialize<'de> for ThresholdRange<F> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses `range_text` and reports whether `value` alerts against it.
pub fn eval_range<F: Scalar>(value: F, range_text: &str) -> Result<bool, MalformedRange> {
    Ok(ThresholdRange::<F>::parse(range_text)?.alerts(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table() {
        assert!(eval_range(15.0, "10").unwrap());
        assert!(!eval_range(5.0, "3:7").unwrap());
        assert!(eval_range(5.0, "@3:7").unwrap());
        assert!(eval_range(-1.0, "10").unwrap());
        assert!(eval_range(0.0, "1:").unwrap());
        assert!(!eval_range(12.0, "1:").unwrap());
        assert!(!eval_range(-1e9, "~:5").unwrap());
        assert!(eval_range(6.0, "~:5").unwrap());
    }

    #[test]
    fn boundaries_are_inclusive() {
        assert!(!eval_range(10.0, "10").unwrap());
        assert!(!eval_range(0.0, "10").unwrap());
        assert!(eval_range(3.0, "@3:7").unwrap());
        assert!(eval_range(7.0f32, "@3:7").unwrap());
    }

    #[test]
    fn malformed() {
        for bad in ["", "abc", "5:3", "~:", "@", "1:2:3", "nan", "inf", "1e400", ":5"] {
            assert!(eval_range(1.0, bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn display_is_canonical() {
        for text in ["10", "10:", "~:10", "3:7", "@3:7", "@10", "-5:-1", "2.5:"] {
            let r = ThresholdRange::<f64>::parse(text).unwrap();
            assert_eq!(r.to_string(), text);
        }
    }
}
