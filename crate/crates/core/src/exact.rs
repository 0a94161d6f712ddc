//! Exact rational quantities for simulated time and distance.
//!
//! Kinematic parameters arrive as decimals (`33.3` mm/s, `12.5` s). Converting
//! them through `f64` would make closed-form comparisons approximate, so the
//! simulator works on [`Q`] and only converts to floats for presentation.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rational number used for simulated seconds and millimetres.
pub type Q = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse `{input}` as an exact number")]
pub struct ParseExactError {
    pub input: String,
}

/// Parses `"12.5"`, `"-3"`, `"1/3"`, or `"1.5e2"` into an exact rational.
pub fn parse_q(s: &str) -> Result<Q, ParseExactError> {
    let err = || ParseExactError { input: s.to_string() };
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_q(n).map_err(|_| err())?;
        let d = parse_q(d).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(n / d);
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let joined = format!("{int_part}{frac_part}");
    let numer: i128 = joined.parse().map_err(|_| err())?;
    let scale = exp - frac_part.len() as i32;
    if scale.unsigned_abs() > 30 {
        return Err(err());
    }
    let pow = 10i128.pow(scale.unsigned_abs());
    let mut q = if scale >= 0 { Q::from_integer(numer * pow) } else { Q::new(numer, pow) };
    if neg {
        q = -q;
    }
    Ok(q)
}

/// Converts a float through its shortest round-trip decimal representation,
/// so `33.3_f64` becomes exactly `333/10`.
pub fn q_from_f64(x: f64) -> Q {
    assert!(x.is_finite(), "non-finite value {x}");
    parse_q(&format!("{x}")).expect("float Display output is always parseable")
}

pub fn q_to_f64(q: &Q) -> f64 {
    q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn q_int(n: i64) -> Q {
    Q::from_integer(n as i128)
}

pub fn q_abs(q: &Q) -> Q {
    q.abs()
}

/// `Q` wrapper with a human-friendly text form: integers and terminating
/// decimals print as decimals, everything else as `p/q`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exact(pub Q);

impl Exact {
    pub fn as_f64(&self) -> f64 {
        q_to_f64(&self.0)
    }
}

impl From<Q> for Exact {
    fn from(q: Q) -> Self {
        Exact(q)
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_q(&self.0))
    }
}

impl FromStr for Exact {
    type Err = ParseExactError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_q(s).map(Exact)
    }
}

/// Formats as a terminating decimal when the denominator is `2^a 5^b`.
pub fn format_q(q: &Q) -> String {
    let mut d = *q.denom();
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
        return format!("{}/{}", q.numer(), q.denom());
    }
    let places = twos.max(fives);
    if places == 0 {
        return q.numer().to_string();
    }
    let scaled = q * Q::from_integer(10i128.pow(places));
    let n = scaled.to_integer();
    let sign = if n < 0 { "-" } else { "" };
    let digits = format!("{:0>width$}", n.unsigned_abs(), width = places as usize + 1);
    let (i, frac) = digits.split_at(digits.len() - places as usize);
    format!("{sign}{i}.{frac}")
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Exact(q_int(i))),
            Raw::Float(x) if x.is_finite() => Ok(Exact(q_from_f64(x))),
            Raw::Float(x) => Err(serde::de::Error::custom(format!("non-finite number {x}"))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `#[serde(with = "as_text")]` for bare [`Q`] fields.
pub mod as_text {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Q, s: S) -> Result<S::Ok, S::Error> {
        Exact(*q).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        Exact::deserialize(d).map(|e| e.0)
    }
}
