use std::fmt;

use serde::Serialize;
use serde_json::{Map, Number, Value};

use super::{ParamType, ToolSpec};

/// Normalized tool arguments keyed by parameter name.
pub type Args = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub param: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.param.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "`{}`: {}", self.param, self.message)
        }
    }
}

pub fn render_violations(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Convert `value` to the canonical representation of `ty`, if lossless.
pub(crate) fn coerce(ty: ParamType, value: &Value) -> Option<Value> {
    match (ty, value) {
        (ParamType::Text, Value::String(_)) => Some(value.clone()),
        (ParamType::Boolean, Value::Bool(_)) => Some(value.clone()),
        (ParamType::Record, Value::Object(_)) => Some(value.clone()),
        (ParamType::Integer, Value::Number(n)) => integer(n).map(Value::from),
        (ParamType::Real, Value::Number(n)) => real(n),
        (ParamType::ListOfReal, Value::Array(items)) => items
            .iter()
            .map(|v| v.as_number().and_then(real))
            .collect::<Option<Vec<_>>>()
            .map(Value::Array),
        _ => None,
    }
}

fn integer(n: &Number) -> Option<i64> {
    if let Some(i) = n.as_i64() {
        return Some(i);
    }
    let f = n.as_f64()?;
    (f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

fn real(n: &Number) -> Option<Value> {
    n.as_f64().and_then(Number::from_f64).map(Value::Number)
}

/// Check `args` against `spec`: required parameters present, types coerced
/// where lossless, defaults filled, unknown parameters rejected. `null`
/// counts as absent.
pub fn validate_args(spec: &ToolSpec, args: &Value) -> Result<Args, Vec<Violation>> {
    let empty = Map::new();
    let given = match args {
        Value::Object(m) => m,
        Value::Null => &empty,
        _ => {
            return Err(vec![Violation {
                param: String::new(),
                message: "arguments must be a record".into(),
            }])
        }
    };
    let mut violations = Vec::new();
    let mut out = Map::new();

    for name in given.keys() {
        if spec.param(name).is_none() {
            violations.push(Violation {
                param: name.clone(),
                message: "unknown parameter".into(),
            });
        }
    }
    for p in &spec.params {
        match given.get(&p.name).filter(|v| !v.is_null()) {
            Some(v) => match coerce(p.ty, v) {
                Some(c) => {
                    out.insert(p.name.clone(), c);
                }
                None => violations.push(Violation {
                    param: p.name.clone(),
                    message: format!("expected {}, got {}", p.ty, type_name(v)),
                }),
            },
            None if p.required => violations.push(Violation {
                param: p.name.clone(),
                message: "missing required parameter".into(),
            }),
            None => {
                if let Some(d) = p.default.as_ref().and_then(|d| coerce(p.ty, d)) {
                    out.insert(p.name.clone(), d);
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(violations)
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "text",
        Value::Array(_) => "list",
        Value::Object(_) => "record",
    }
}
