//! Exact edge weights: non-negative rationals plus a distinguished BLOCKED
//! symbol that compares greater than every finite weight.
//!
//! All weight arithmetic is exact. There is no tolerance parameter anywhere
//! in this crate; equality of passage times means equality of rationals.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

/// Exact rational scalar used for weights, probabilities and thresholds.
pub type Rat = BigRational;

/// Rational from an integer.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational `num/den`. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"a/b"` or `"a"` into a rational.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num
        .parse()
        .map_err(|_| format!("invalid numerator in rational {s:?}"))?;
    let d: BigInt = den
        .parse()
        .map_err(|_| format!("invalid denominator in rational {s:?}"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in rational {s:?}"));
    }
    Ok(Rat::new(n, d))
}

/// Renders a rational as `num/den` in lowest terms, denominator always shown.
pub fn rat_str(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Serde adapter: rationals as `"num/den"` strings.
pub mod rat_serde {
    use super::{parse_rat, rat_str, Rat};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&rat_str(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(de)?;
        parse_rat(&s).map_err(de::Error::custom)
    }
}

/// Serde adapter for `Option<Rat>`.
pub mod opt_rat_serde {
    use super::{parse_rat, rat_str, Rat};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rat>, ser: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => ser.serialize_some(&rat_str(r)),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Rat>, D::Error> {
        let s: Option<String> = Option::deserialize(de)?;
        s.map(|s| parse_rat(&s).map_err(de::Error::custom)).transpose()
    }
}

/// An edge weight: an exact non-negative rational, or BLOCKED.
///
/// BLOCKED is a distinguished symbol (semantically +infinity) used by edge
/// deletion tests. It is not a large number, so it can never alias or
/// overflow into a real weight.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Weight {
    Finite(Rat),
    Blocked,
}

impl Weight {
    pub fn zero() -> Self {
        Weight::Finite(Rat::zero())
    }

    pub fn from_int(n: i64) -> Self {
        Weight::Finite(rat_int(n))
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Weight::Blocked)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Weight::Finite(r) if r.is_zero())
    }

    /// The finite value, if any.
    pub fn finite(&self) -> Option<&Rat> {
        match self {
            Weight::Finite(r) => Some(r),
            Weight::Blocked => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "BLOCKED" {
            return Ok(Weight::Blocked);
        }
        let r = parse_rat(s)?;
        if r.is_negative() {
            return Err(format!("negative weight {s:?}"));
        }
        Ok(Weight::Finite(r))
    }

    /// Scales a finite weight by an integer factor; BLOCKED stays BLOCKED.
    pub fn scaled(&self, k: i64) -> Weight {
        match self {
            Weight::Finite(r) => Weight::Finite(r * rat_int(k)),
            Weight::Blocked => Weight::Blocked,
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Finite(r) => write!(f, "{}", rat_str(r)),
            Weight::Blocked => write!(f, "BLOCKED"),
        }
    }
}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Weight::Finite(a), Weight::Finite(b)) => a.cmp(b),
            (Weight::Finite(_), Weight::Blocked) => Ordering::Less,
            (Weight::Blocked, Weight::Finite(_)) => Ordering::Greater,
            (Weight::Blocked, Weight::Blocked) => Ordering::Equal,
        }
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        match (self, rhs) {
            (Weight::Finite(a), Weight::Finite(b)) => Weight::Finite(a + b),
            _ => Weight::Blocked,
        }
    }
}

impl<'a> Add<&'a Weight> for Weight {
    type Output = Weight;
    fn add(self, rhs: &'a Weight) -> Weight {
        match (self, rhs) {
            (Weight::Finite(a), Weight::Finite(b)) => Weight::Finite(a + b),
            _ => Weight::Blocked,
        }
    }
}

impl AddAssign<&Weight> for Weight {
    fn add_assign(&mut self, rhs: &Weight) {
        let lhs = std::mem::replace(self, Weight::Blocked);
        *self = lhs + rhs;
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::zero(), |acc, w| acc + w)
    }
}

impl From<Rat> for Weight {
    fn from(r: Rat) -> Self {
        Weight::Finite(r)
    }
}
