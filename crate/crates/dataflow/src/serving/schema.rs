//! Structured-output validation against a JSON-schema subset.
//!
//! Supported keywords: `type`, `properties`, `required`, `items`, `enum`.
//! Violations name the offending keyword and the path to the value, e.g.
//! path `.sql`, keyword `type`.

use serde_json::Value;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum StructuredOutputError {
    #[error("output is not valid JSON: {0}")]
    Parse(String),
    #[error("schema violation at path `{path}`, keyword `{keyword}`: {detail}")]
    Violation {
        path: String,
        keyword: String,
        detail: String,
    },
}

fn violation(path: &str, keyword: &str, detail: impl Into<String>) -> StructuredOutputError {
    StructuredOutputError::Violation {
        path: if path.is_empty() { ".".to_string() } else { path.to_string() },
        keyword: keyword.to_string(),
        detail: detail.into(),
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn matches_type(value: &Value, expected: &str) -> bool {
    match expected {
        "integer" => value
            .as_f64()
            .map(|f| f.fract() == 0.0 && f.is_finite())
            .unwrap_or(false),
        other => type_name(value) == other,
    }
}

fn check(value: &Value, schema: &Value, path: &str) -> Result<(), StructuredOutputError> {
    let schema = match schema {
        Value::Object(map) => map,
        // A non-object schema constrains nothing.
        _ => return Ok(()),
    };

    if let Some(expected) = schema.get("type").and_then(Value::as_str) {
        if !matches_type(value, expected) {
            return Err(violation(
                path,
                "type",
                format!("expected {expected}, got {}", type_name(value)),
            ));
        }
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(violation(path, "enum", format!("{value} is not one of the allowed values")));
        }
    }

    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        if let Value::Object(object) = value {
            for name in required.iter().filter_map(Value::as_str) {
                if !object.contains_key(name) {
                    return Err(violation(path, "required", format!("missing property {name:?}")));
                }
            }
        }
    }

    if let Some(properties) = schema.get("properties").and_then(Value::as_object) {
        if let Value::Object(object) = value {
            for (name, sub_schema) in properties {
                if let Some(sub_value) = object.get(name) {
                    check(sub_value, sub_schema, &format!("{path}.{name}"))?;
                }
            }
        }
    }

    if let Some(items) = schema.get("items") {
        if let Value::Array(array) = value {
            for (idx, item) in array.iter().enumerate() {
                check(item, items, &format!("{path}[{idx}]"))?;
            }
        }
    }

    Ok(())
}

/// Parses `text` as JSON and checks it against `schema`. Returns the parsed
/// value on success.
pub fn validate_structured_output(text: &str, schema: &Value) -> Result<Value, StructuredOutputError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| StructuredOutputError::Parse(e.to_string()))?;
    check(&value, schema, "")?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sql_schema() -> Value {
        json!({
            "type": "object",
            "properties": { "sql": { "type": "string" } },
            "required": ["sql"]
        })
    }

    #[test]
    fn conforming_text_parses() {
        let value = validate_structured_output(r#"{"sql":"SELECT 1"}"#, &sql_schema()).unwrap();
        assert_eq!(value["sql"], "SELECT 1");
    }

    #[test]
    fn non_json_is_a_parse_failure() {
        let err = validate_structured_output("not json", &sql_schema()).unwrap_err();
        assert!(matches!(err, StructuredOutputError::Parse(_)));
    }

    #[test]
    fn wrong_property_type_names_path_and_keyword() {
        let err = validate_structured_output(r#"{"sql": 3}"#, &sql_schema()).unwrap_err();
        match err {
            StructuredOutputError::Violation { path, keyword, .. } => {
                assert_eq!(path, ".sql");
                assert_eq!(keyword, "type");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn missing_required_property_is_reported() {
        let err = validate_structured_output(r#"{"other": 1}"#, &sql_schema()).unwrap_err();
        match err {
            StructuredOutputError::Violation { keyword, detail, .. } => {
                assert_eq!(keyword, "required");
                assert!(detail.contains("sql"));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn enum_items_and_integer_checks() {
        let schema = json!({
            "type": "array",
            "items": { "type": "integer", "enum": [1, 2, 3] }
        });
        assert!(validate_structured_output("[1,2,3]", &schema).is_ok());
        let err = validate_structured_output("[1,4]", &schema).unwrap_err();
        match err {
            StructuredOutputError::Violation { path, keyword, .. } => {
                assert_eq!(path, "[1]");
                assert_eq!(keyword, "enum");
            }
            other => panic!("unexpected: {other:?}"),
        }
        let err = validate_structured_output("[1.5]", &schema).unwrap_err();
        assert!(matches!(err, StructuredOutputError::Violation { ref keyword, .. } if keyword == "type"));
    }
}
