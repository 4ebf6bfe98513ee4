//! Number formatting shared by the CSV and JSON outputs.
//!
//! Every floating point value is written with 17 significant digits so that
//! an `f64` survives a write/read cycle bit-exactly.

use std::str::FromStr;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::scalar::Real;

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn number(x: f64) -> Option<serde_json::Number> {
    if x.is_finite() {
        serde_json::Number::from_str(&fmt_sig17(x)).ok()
    } else {
        None
    }
}

/// serde `serialize_with` helper: 17 significant digits, non-finite as `null`.
pub fn sig17<T: Real, S: Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    number(x.as_f64()).serialize(s)
}

pub fn sig17_opt<T: Real, S: Serializer>(x: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    x.and_then(|v| number(v.as_f64())).serialize(s)
}

pub fn sig17_vec<T: Real, S: Serializer>(xs: &[T], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&number(x.as_f64()))?;
    }
    seq.end()
}

/// Pretty JSON with a trailing newline.
pub fn to_json<V: Serialize>(value: &V) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
