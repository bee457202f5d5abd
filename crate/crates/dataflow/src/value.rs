//! Kind-tagged cell values for the tabular dataset representation.

use serde_json::{Map, Number, Value};
use std::fmt;

/// The six value kinds a dataset cell can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Number,
    Boolean,
    Sequence,
    Object,
    Null,
}

impl ValueKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValueKind::Text => "text",
            ValueKind::Number => "number",
            ValueKind::Boolean => "boolean",
            ValueKind::Sequence => "sequence",
            ValueKind::Object => "object",
            ValueKind::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Option<ValueKind> {
        match s {
            "text" => Some(ValueKind::Text),
            "number" => Some(ValueKind::Number),
            "boolean" => Some(ValueKind::Boolean),
            "sequence" => Some(ValueKind::Sequence),
            "object" => Some(ValueKind::Object),
            "null" => Some(ValueKind::Null),
            _ => None,
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One cell value. The kind tag is implied by the variant, so tag and
/// payload cannot disagree. Numbers keep the JSON integer/float distinction
/// so integers with |v| < 2^53 round-trip exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Null,
    Text(String),
    Number(Number),
    Boolean(bool),
    Sequence(Vec<FieldValue>),
    Object(Vec<(String, FieldValue)>),
}

impl FieldValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            FieldValue::Null => ValueKind::Null,
            FieldValue::Text(_) => ValueKind::Text,
            FieldValue::Number(_) => ValueKind::Number,
            FieldValue::Boolean(_) => ValueKind::Boolean,
            FieldValue::Sequence(_) => ValueKind::Sequence,
            FieldValue::Object(_) => ValueKind::Object,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, FieldValue::Null)
    }

    pub fn text(s: impl Into<String>) -> FieldValue {
        FieldValue::Text(s.into())
    }

    pub fn int(n: i64) -> FieldValue {
        FieldValue::Number(Number::from(n))
    }

    pub fn float(n: f64) -> FieldValue {
        Number::from_f64(n).map(FieldValue::Number).unwrap_or(FieldValue::Null)
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FieldValue::Number(n) => n.as_f64(),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            FieldValue::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn from_json(value: Value) -> FieldValue {
        match value {
            Value::Null => FieldValue::Null,
            Value::Bool(b) => FieldValue::Boolean(b),
            Value::Number(n) => FieldValue::Number(n),
            Value::String(s) => FieldValue::Text(s),
            Value::Array(items) => {
                FieldValue::Sequence(items.into_iter().map(FieldValue::from_json).collect())
            }
            Value::Object(map) => FieldValue::Object(
                map.into_iter().map(|(k, v)| (k, FieldValue::from_json(v))).collect(),
            ),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            FieldValue::Null => Value::Null,
            FieldValue::Text(s) => Value::String(s.clone()),
            FieldValue::Number(n) => Value::Number(n.clone()),
            FieldValue::Boolean(b) => Value::Bool(*b),
            FieldValue::Sequence(items) => Value::Array(items.iter().map(|v| v.to_json()).collect()),
            FieldValue::Object(entries) => {
                let mut map = Map::new();
                for (k, v) in entries {
                    map.insert(k.clone(), v.to_json());
                }
                Value::Object(map)
            }
        }
    }
}

impl From<&str> for FieldValue {
    fn from(s: &str) -> Self {
        FieldValue::Text(s.to_string())
    }
}

impl From<String> for FieldValue {
    fn from(s: String) -> Self {
        FieldValue::Text(s)
    }
}

impl From<i64> for FieldValue {
    fn from(n: i64) -> Self {
        FieldValue::int(n)
    }
}

impl From<f64> for FieldValue {
    fn from(n: f64) -> Self {
        FieldValue::float(n)
    }
}

impl From<bool> for FieldValue {
    fn from(b: bool) -> Self {
        FieldValue::Boolean(b)
    }
}

/// Serializes a JSON value with object keys sorted recursively and no
/// whitespace. Digests over pipeline plans and configurations use this form
/// so logically equal structures hash identically.
pub fn canonical_json(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, key) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String((*key).clone()).to_string());
                    out.push(':');
                    write(&map[key.as_str()], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            _ => out.push_str(&value.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_matches_payload() {
        assert_eq!(FieldValue::text("x").kind(), ValueKind::Text);
        assert_eq!(FieldValue::int(3).kind(), ValueKind::Number);
        assert_eq!(FieldValue::Null.kind(), ValueKind::Null);
        assert_eq!(FieldValue::Boolean(true).kind(), ValueKind::Boolean);
        assert_eq!(FieldValue::Sequence(vec![]).kind(), ValueKind::Sequence);
        assert_eq!(FieldValue::Object(vec![]).kind(), ValueKind::Object);
    }

    #[test]
    fn large_integers_round_trip_through_json() {
        let big = (1i64 << 53) - 1;
        let v = FieldValue::int(big);
        let json = v.to_json();
        assert_eq!(serde_json::to_string(&json).unwrap(), big.to_string());
        assert_eq!(FieldValue::from_json(json), v);
    }

    #[test]
    fn integer_and_float_numbers_stay_distinct() {
        let int = FieldValue::int(3);
        let float = FieldValue::float(3.0);
        assert_eq!(serde_json::to_string(&int.to_json()).unwrap(), "3");
        assert_eq!(serde_json::to_string(&float.to_json()).unwrap(), "3.0");
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: Value = serde_json::from_str(r#"{"b":1,"a":{"z":[2,{"y":0,"x":1}],"w":null}}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":{"w":null,"z":[2,{"x":1,"y":0}]},"b":1}"#);
    }
}
