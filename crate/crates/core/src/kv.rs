//! Plain-text `key=value` serialization of flat config structs.
//!
//! Values are parsed according to the JSON type of the field in the base
//! struct, so numbers stay numbers and booleans stay booleans.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{MmnError, Result};

fn as_object<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value).expect("config structs serialize") {
        Value::Object(m) => m,
        other => panic!("expected a flat struct, got {other}"),
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "none".into(),
        other => other.to_string(),
    }
}

/// One `key=value` line per field, in declaration order.
pub fn to_lines<T: Serialize>(value: &T) -> String {
    as_object(value).iter().map(|(k, v)| format!("{k}={}\n", render(v))).collect()
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| MmnError::Parse { line: i + 1, msg: format!("expected key=value, got {line:?}") })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value(key: &str, raw: &str, like: &Value) -> Result<Value> {
    let bad = || MmnError::Config(format!("cannot parse {key}={raw}"));
    Ok(match like {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad())?),
        Value::Number(n) if n.is_u64() || n.is_i64() => match raw.parse::<i64>() {
            Ok(i) => Value::from(i),
            Err(_) => Value::from(raw.parse::<f64>().map_err(|_| bad())?),
        },
        Value::Number(_) => Value::from(raw.parse::<f64>().map_err(|_| bad())?),
        Value::String(_) => Value::String(raw.to_string()),
        // Optional fields: "none" clears, anything else is taken as a number
        // when it parses as one.
        Value::Null => {
            if raw.eq_ignore_ascii_case("none") {
                Value::Null
            } else if let Ok(i) = raw.parse::<i64>() {
                Value::from(i)
            } else if let Ok(f) = raw.parse::<f64>() {
                Value::from(f)
            } else {
                Value::String(raw.to_string())
            }
        }
        _ => return Err(bad()),
    })
}

/// Overrides fields of `base` by name. Keys not present in `T` are returned
/// untouched so several structs can share one config file.
pub fn apply<T: Serialize + DeserializeOwned>(base: &T, pairs: &[(String, String)]) -> Result<(T, Vec<(String, String)>)> {
    let mut obj = as_object(base);
    let mut rest = Vec::new();
    for (k, v) in pairs {
        match obj.get(k) {
            Some(like) => {
                let parsed = parse_value(k, v, like)?;
                obj.insert(k.clone(), parsed);
            }
            None => rest.push((k.clone(), v.clone())),
        }
    }
    let value = serde_json::from_value(Value::Object(obj)).map_err(|e| MmnError::Config(e.to_string()))?;
    Ok((value, rest))
}
