//! Canonical JSON rendering.
//!
//! Objects are emitted with keys in lexicographic order (serde_json's default
//! map is a `BTreeMap`), without insignificant whitespace, and with integral
//! floating point values rendered as integers. Two equal values always produce
//! byte-identical text.

use serde::Serialize;
use serde_json::{Map, Number, Value};

/// Largest magnitude for which every integer is exactly representable as f64.
const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

/// Rewrites a value tree so numbers use their minimal rendering.
pub fn canonicalize(value: Value) -> Value {
    match value {
        Value::Number(n) => Value::Number(minimal_number(n)),
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Object(map) => {
            let mut out = Map::new();
            for (k, v) in map {
                out.insert(k, canonicalize(v));
            }
            Value::Object(out)
        }
        other => other,
    }
}

fn minimal_number(n: Number) -> Number {
    if n.is_i64() || n.is_u64() {
        return n;
    }
    match n.as_f64() {
        Some(f) if f.fract() == 0.0 && f.abs() < EXACT_INT_LIMIT => Number::from(f as i64),
        _ => n,
    }
}

/// JSON number for an f64, integral values rendered without a fraction.
pub fn number(f: f64) -> Value {
    if f.fract() == 0.0 && f.abs() < EXACT_INT_LIMIT {
        Value::Number(Number::from(f as i64))
    } else {
        Number::from_f64(f)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

/// Canonical text of an already-built value.
pub fn to_canonical_string(value: &Value) -> String {
    // serde_json without `preserve_order` keeps object keys sorted.
    canonicalize(value.clone()).to_string()
}

/// Canonical text of any serializable value.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    to_canonical_string(&v)
}
