//! Serde helpers for floats that may be infinite.
//!
//! JSON has no infinity literal, so `+inf`/`-inf` are written as the strings
//! `"inf"`/`"-inf"` and NaN as `null`.

use serde::de::{self, Deserializer, Visitor};
use serde::Serializer;
use std::fmt;

pub mod inf_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(FloatVisitor)
    }
}

/// `Option<f64>` with the same encoding; `None` is omitted by the caller.
pub mod inf_f64_opt {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "super::inf_f64")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(W).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

struct FloatVisitor;

impl<'de> Visitor<'de> for FloatVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number, \"inf\", \"-inf\" or null")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_unit<E: de::Error>(self) -> Result<f64, E> {
        Ok(f64::NAN)
    }

    fn visit_none<E: de::Error>(self) -> Result<f64, E> {
        Ok(f64::NAN)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        match v {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
        }
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct S {
        #[serde(with = "super::inf_f64")]
        x: f64,
        #[serde(default, skip_serializing_if = "Option::is_none", with = "super::inf_f64_opt")]
        v: Option<f64>,
    }

    #[test]
    fn infinities_roundtrip() {
        let s = S {
            x: f64::INFINITY,
            v: Some(f64::NEG_INFINITY),
        };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"x":"inf","v":"-inf"}"#);
        assert_eq!(serde_json::from_str::<S>(&json).unwrap(), s);
    }

    #[test]
    fn nan_is_null() {
        let json = serde_json::to_string(&S { x: f64::NAN, v: None }).unwrap();
        assert_eq!(json, r#"{"x":null}"#);
        assert!(serde_json::from_str::<S>(&json).unwrap().x.is_nan());
    }
}
