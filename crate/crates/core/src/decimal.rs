//! Decimal-string numerics.
//!
//! Every real number that crosses a file or wire boundary is written as a
//! decimal string. Formatting uses the shortest representation that parses
//! back to the same `f64`, so a read/write cycle is bit-exact.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use std::fmt;

use crate::error::{Error, Result};

/// Shortest round-trip decimal text for `x`.
pub fn format(x: f64) -> String {
    if x == 0.0 {
        // normalise -0
        return "0".to_string();
    }
    format!("{x}")
}

pub fn parse(s: &str) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Decimal(s.to_string()))
}

/// Rounds to 15 significant digits. Any decimal with at most 15 significant
/// digits survives this unchanged, so arithmetic noise such as
/// `0.6000000000000001` collapses back to the intended `0.6`.
pub fn snap(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.14e}").parse().unwrap_or(x)
}

struct DecimalVisitor;

impl Visitor<'_> for DecimalVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a decimal string or number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
        parse(v).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format(*x))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    d.deserialize_any(DecimalVisitor)
}

pub mod vec {
    use super::*;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&format(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Dec(#[serde(deserialize_with = "super::deserialize")] f64);
        let v: Vec<Dec> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|Dec(x)| x).collect())
    }
}

pub mod opt {
    use super::*;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match x {
            Some(v) => s.serialize_str(&format(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Dec(#[serde(deserialize_with = "super::deserialize")] f64);
        Ok(Option::<Dec>::deserialize(d)?.map(|Dec(x)| x))
    }
}
