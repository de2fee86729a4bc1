//! Whole-second durations in the compact `1h2m3s` notation used by Chaos Mesh deadlines.

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DurationError {
    #[error("empty duration")]
    Empty,
    #[error("invalid duration {text:?}: unexpected token {token:?}")]
    Garbled { text: String, token: String },
    #[error("duration {0:?} overflows")]
    Overflow(String),
}

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_secs(secs: u64) -> Self {
        Duration(secs)
    }

    pub const fn from_mins(mins: u64) -> Self {
        Duration(mins * 60)
    }

    pub const fn secs(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn max(self, other: Duration) -> Duration {
        Duration(self.0.max(other.0))
    }

    pub fn saturating_sub(self, other: Duration) -> Duration {
        Duration(self.0.saturating_sub(other.0))
    }

    pub fn parse(text: &str) -> Result<Self, DurationError> {
        parse_duration(text)
    }
}

/// Parses `^(\d+h)?(\d+m)?(\d+s)?$` with at least one component.
pub fn parse_duration(text: &str) -> Result<Duration, DurationError> {
    if text.is_empty() {
        return Err(DurationError::Empty);
    }
    let garbled = |token: &str| DurationError::Garbled {
        text: text.to_string(),
        token: token.to_string(),
    };
    let mut total: u64 = 0;
    let mut rank = 0; // 1 = h, 2 = m, 3 = s seen
    let mut digits = String::new();
    for (i, c) in text.char_indices() {
        if c.is_ascii_digit() {
            digits.push(c);
            continue;
        }
        let (unit_rank, factor) = match c {
            'h' => (1, 3600),
            'm' => (2, 60),
            's' => (3, 1),
            _ => return Err(garbled(&text[i..])),
        };
        if digits.is_empty() || unit_rank <= rank {
            let start = i.saturating_sub(digits.len());
            return Err(garbled(&text[start..]));
        }
        let n: u64 = digits.parse().map_err(|_| DurationError::Overflow(text.to_string()))?;
        total = n
            .checked_mul(factor)
            .and_then(|v| total.checked_add(v))
            .ok_or_else(|| DurationError::Overflow(text.to_string()))?;
        rank = unit_rank;
        digits.clear();
    }
    if !digits.is_empty() {
        return Err(garbled(&digits));
    }
    Ok(Duration(total))
}

pub fn format_duration(d: Duration) -> String {
    d.to_string()
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("0s");
        }
        let (h, m, s) = (self.0 / 3600, self.0 / 60 % 60, self.0 % 60);
        if h > 0 {
            write!(f, "{h}h")?;
        }
        if m > 0 {
            write!(f, "{m}m")?;
        }
        if s > 0 {
            write!(f, "{s}s")?;
        }
        Ok(())
    }
}

impl FromStr for Duration {
    type Err = DurationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_duration(s)
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        iter.fold(Duration::ZERO, Add::add)
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_duration(text.trim()).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_manifest_deadlines() {
        assert_eq!(parse_duration("5m10s").unwrap().secs(), 310);
        assert_eq!(parse_duration("30m51s").unwrap().secs(), 1851);
        assert_eq!(parse_duration("0s").unwrap(), Duration::ZERO);
        assert_eq!(parse_duration("1h").unwrap().secs(), 3600);
        assert_eq!(parse_duration("90s").unwrap().secs(), 90);
    }

    #[test]
    fn formats_largest_unit_first() {
        assert_eq!(Duration::from_secs(1851).to_string(), "30m51s");
        assert_eq!(Duration::from_secs(0).to_string(), "0s");
        assert_eq!(Duration::from_secs(3600).to_string(), "1h");
        assert_eq!(Duration::from_secs(3605).to_string(), "1h5s");
        assert_eq!(Duration::from_secs(300).to_string(), "5m");
    }

    #[test]
    fn rejects_garbled_text() {
        assert_eq!(parse_duration(""), Err(DurationError::Empty));
        for bad in ["5x", "s", "5m5m", "5s5m", "10", "m5", "-5s", "5 s"] {
            assert!(parse_duration(bad).is_err(), "{bad}");
        }
        match parse_duration("5m3q") {
            Err(DurationError::Garbled { token, .. }) => assert_eq!(token, "q"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serde_uses_compact_form() {
        let d: Duration = serde_json::from_str("\"5m5s\"").unwrap();
        assert_eq!(d.secs(), 305);
        assert_eq!(serde_json::to_string(&d).unwrap(), "\"5m5s\"");
    }
}
