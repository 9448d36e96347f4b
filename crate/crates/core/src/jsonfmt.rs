//! Reproducible JSON output: struct field order is kept and every float is
//! rounded to 9 significant digits before printing.

use serde::Serialize;
use serde_json::Value;

pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig9).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(m) => m.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn to_value<T: Serialize + ?Sized>(v: &T) -> serde_json::Result<Value> {
    let mut value = serde_json::to_value(v)?;
    round_value(&mut value);
    Ok(value)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_string<T: Serialize + ?Sized>(v: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(&to_value(v)?)?;
    s.push('\n');
    Ok(s)
}
