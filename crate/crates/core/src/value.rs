//! Typed domain values.
//!
//! Decimals are fixed-point hundredths and dates are days since 1970-01-01,
//! so every ordered datatype except text has an exact `i64` ordinal that the
//! bucketizer and the cardinality estimator can work on directly.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    Integer,
    Decimal,
    Text,
    Date,
}

impl Datatype {
    pub fn is_ordered_numeric(self) -> bool {
        !matches!(self, Datatype::Text)
    }

    /// Fixed plain width in bytes; text is variable and measured from data.
    pub fn fixed_width(self) -> Option<u32> {
        match self {
            Datatype::Integer | Datatype::Decimal => Some(8),
            Datatype::Date => Some(4),
            Datatype::Text => None,
        }
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Datatype::Integer => "integer",
            Datatype::Decimal => "decimal",
            Datatype::Text => "text",
            Datatype::Date => "date",
        };
        f.write_str(s)
    }
}

/// A single domain value.
///
/// `Real` only appears as the result of arithmetic in projections; stored
/// attributes are always one of the four catalog datatypes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    /// Hundredths.
    Decimal(i64),
    /// Days since the Unix epoch.
    Date(i32),
    Text(String),
    Real(f64),
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn date_to_days(date: NaiveDate) -> i32 {
    (date - epoch()).num_days() as i32
}

pub fn days_to_date(days: i32) -> NaiveDate {
    if days >= 0 {
        epoch() + Days::new(days as u64)
    } else {
        epoch() - Days::new((-(days as i64)) as u64)
    }
}

pub fn parse_date(s: &str) -> Result<i32> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map(date_to_days)
        .map_err(|e| Error::Parse(format!("invalid date {s:?}: {e}")))
}

pub fn format_days(days: i32) -> String {
    days_to_date(days).format("%Y-%m-%d").to_string()
}

/// Parses a decimal literal into hundredths. At most two fractional digits.
pub fn parse_decimal(s: &str) -> Result<i64> {
    let t = s.trim();
    let err = || Error::Parse(format!("invalid decimal {s:?}"));
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    if body.is_empty() {
        return Err(err());
    }
    let (whole, frac) = match body.split_once('.') {
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if frac.len() > 2
        || !whole.chars().all(|c| c.is_ascii_digit())
        || !frac.chars().all(|c| c.is_ascii_digit())
        || (whole.is_empty() && frac.is_empty())
    {
        return Err(err());
    }
    let whole_v: i64 = if whole.is_empty() {
        0
    } else {
        whole.parse().map_err(|_| err())?
    };
    let frac_v: i64 = match frac.len() {
        0 => 0,
        1 => frac.parse::<i64>().map_err(|_| err())? * 10,
        _ => frac.parse().map_err(|_| err())?,
    };
    let cents = whole_v
        .checked_mul(100)
        .and_then(|w| w.checked_add(frac_v))
        .ok_or_else(err)?;
    Ok(if neg { -cents } else { cents })
}

pub fn format_decimal(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let abs = cents.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

impl Value {
    /// Parses the textual form of a value of the given datatype (CSV cells,
    /// catalog statistics).
    pub fn parse(datatype: Datatype, s: &str) -> Result<Value> {
        match datatype {
            Datatype::Integer => s
                .trim()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|e| Error::Parse(format!("invalid integer {s:?}: {e}"))),
            Datatype::Decimal => parse_decimal(s).map(Value::Decimal),
            Datatype::Date => parse_date(s).map(Value::Date),
            Datatype::Text => Ok(Value::Text(s.to_string())),
        }
    }

    pub fn datatype(&self) -> Option<Datatype> {
        match self {
            Value::Int(_) => Some(Datatype::Integer),
            Value::Decimal(_) => Some(Datatype::Decimal),
            Value::Date(_) => Some(Datatype::Date),
            Value::Text(_) => Some(Datatype::Text),
            Value::Real(_) => None,
        }
    }

    /// Exact integer position in the ordered domain (text has none).
    pub fn ordinal(&self) -> Option<i64> {
        match self {
            Value::Int(v) | Value::Decimal(v) => Some(*v),
            Value::Date(d) => Some(*d as i64),
            Value::Text(_) | Value::Real(_) => None,
        }
    }

    pub fn from_ordinal(datatype: Datatype, ordinal: i64) -> Option<Value> {
        match datatype {
            Datatype::Integer => Some(Value::Int(ordinal)),
            Datatype::Decimal => Some(Value::Decimal(ordinal)),
            Datatype::Date => i32::try_from(ordinal).ok().map(Value::Date),
            Datatype::Text => None,
        }
    }

    /// Numeric view used by projection arithmetic.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Decimal(c) => Some(*c as f64 / 100.0),
            Value::Date(d) => Some(*d as f64),
            Value::Real(r) => Some(*r),
            Value::Text(_) => None,
        }
    }

    /// In-memory byte width used for intermediate-size accounting.
    pub fn byte_width(&self) -> u64 {
        match self {
            Value::Int(_) | Value::Decimal(_) | Value::Real(_) => 8,
            Value::Date(_) => 4,
            Value::Text(s) => s.len() as u64,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Decimal(_) => 1,
            Value::Date(_) => 2,
            Value::Text(_) => 3,
            Value::Real(_) => 4,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Decimal(a), Value::Decimal(b)) => a.cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Int(v) | Value::Decimal(v) => v.hash(state),
            Value::Date(d) => d.hash(state),
            Value::Text(s) => s.hash(state),
            Value::Real(r) => r.to_bits().hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Decimal(c) => f.write_str(&format_decimal(*c)),
            Value::Date(d) => f.write_str(&format_days(*d)),
            Value::Text(s) => f.write_str(s),
            Value::Real(r) => write!(f, "{r}"),
        }
    }
}
