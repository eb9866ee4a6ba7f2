//! Validation for the JSON Schema subset used by the structured-output
//! schemas: `type`, `properties`, `required`, `items`, `enum`, `minimum`,
//! `maximum`. Unknown object members are always accepted.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// JSON pointer into the instance, `""` for the root.
    pub path: String,
    pub message: String,
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
        _ => true,
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub fn validate(schema: &Value, instance: &Value) -> Result<(), Violation> {
    check(schema, instance, &mut String::new())
}

fn fail(path: &str, message: String) -> Result<(), Violation> {
    Err(Violation { path: path.to_string(), message })
}

fn check(schema: &Value, v: &Value, path: &mut String) -> Result<(), Violation> {
    let Some(s) = schema.as_object() else { return Ok(()) };

    if let Some(ty) = s.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(t, v),
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_matches(t, v)),
            _ => true,
        };
        if !ok {
            return fail(path, format!("expected {ty}, found {}", type_name(v)));
        }
    }

    if let Some(options) = s.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            return fail(path, format!("{v} is not one of {}", Value::Array(options.clone())));
        }
    }

    if let Some(x) = v.as_f64() {
        if let Some(min) = s.get("minimum").and_then(Value::as_f64) {
            if x < min {
                return fail(path, format!("{x} is below the minimum {min}"));
            }
        }
        if let Some(max) = s.get("maximum").and_then(Value::as_f64) {
            if x > max {
                return fail(path, format!("{x} is above the maximum {max}"));
            }
        }
    }

    if let Some(obj) = v.as_object() {
        if let Some(required) = s.get("required").and_then(Value::as_array) {
            for name in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(name) {
                    return fail(path, format!("missing required field `{name}`"));
                }
            }
        }
        if let Some(props) = s.get("properties").and_then(Value::as_object) {
            for (name, sub) in props {
                if let Some(child) = obj.get(name) {
                    let len = path.len();
                    path.push('/');
                    path.push_str(name);
                    check(sub, child, path)?;
                    path.truncate(len);
                }
            }
        }
    }

    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            let len = path.len();
            path.push('/');
            path.push_str(&i.to_string());
            check(items, child, path)?;
            path.truncate(len);
        }
    }
    Ok(())
}
