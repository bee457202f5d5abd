//! File codecs for the storage layer: JSONL, JSON and CSV.
//!
//! JSONL is one JSON object per line (UTF-8, LF). JSON is a single top-level
//! array of objects. CSV follows RFC 4180 with the first record as header;
//! since CSV cells are untyped text, a sidecar manifest written next to the
//! file records a declared kind per column so typed values survive a round
//! trip. A column holding a single non-null kind is recorded under that kind;
//! mixed columns fall back to the `json` encoding where every cell is a JSON
//! literal. Empty cells decode as null, which means an empty text cell does
//! not survive a CSV round trip (it reads back as null) — the one documented
//! CSV lossiness. A CSV opened without a manifest decodes every cell as text.

use crate::dataset::{Dataset, Row};
use crate::value::{FieldValue, ValueKind};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use super::StorageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageFormat {
    Json,
    Jsonl,
    Csv,
}

impl StorageFormat {
    pub fn parse(s: &str) -> Result<StorageFormat, StorageError> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(StorageFormat::Json),
            "jsonl" => Ok(StorageFormat::Jsonl),
            "csv" => Ok(StorageFormat::Csv),
            other => Err(StorageError::UnsupportedFormat(other.to_string())),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            StorageFormat::Json => "json",
            StorageFormat::Jsonl => "jsonl",
            StorageFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for StorageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Path of the sidecar manifest for a CSV file: `<name>.csv.manifest.json`.
pub fn csv_manifest_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    csv_path.with_file_name(name)
}

/// Declared cell encoding of one CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CsvKind {
    Text,
    Number,
    Boolean,
    Sequence,
    Object,
    Null,
    /// Mixed-kind column: every cell is a JSON literal.
    Json,
}

impl CsvKind {
    fn as_str(&self) -> &'static str {
        match self {
            CsvKind::Text => "text",
            CsvKind::Number => "number",
            CsvKind::Boolean => "boolean",
            CsvKind::Sequence => "sequence",
            CsvKind::Object => "object",
            CsvKind::Null => "null",
            CsvKind::Json => "json",
        }
    }

    fn parse(s: &str) -> Option<CsvKind> {
        match s {
            "text" => Some(CsvKind::Text),
            "number" => Some(CsvKind::Number),
            "boolean" => Some(CsvKind::Boolean),
            "sequence" => Some(CsvKind::Sequence),
            "object" => Some(CsvKind::Object),
            "null" => Some(CsvKind::Null),
            "json" => Some(CsvKind::Json),
            _ => None,
        }
    }

    fn for_column(dataset: &Dataset, column: &str) -> CsvKind {
        let kinds = dataset.column_kinds(column);
        match kinds.as_slice() {
            [] => CsvKind::Null,
            [ValueKind::Text] => CsvKind::Text,
            [ValueKind::Number] => CsvKind::Number,
            [ValueKind::Boolean] => CsvKind::Boolean,
            [ValueKind::Sequence] => CsvKind::Sequence,
            [ValueKind::Object] => CsvKind::Object,
            _ => CsvKind::Json,
        }
    }
}

fn malformed(path: Option<&Path>, line: Option<usize>, detail: impl Into<String>) -> StorageError {
    StorageError::Malformed {
        path: path.map(Path::to_path_buf),
        line,
        detail: detail.into(),
    }
}

pub fn decode_jsonl(bytes: &[u8], path: Option<&Path>) -> Result<Dataset, StorageError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| malformed(path, None, format!("invalid UTF-8 at byte {}", e.valid_up_to())))?;
    let mut dataset = Dataset::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| malformed(path, Some(idx + 1), e.to_string()))?;
        let row = Row::from_json_object(value)
            .ok_or_else(|| malformed(path, Some(idx + 1), "expected a JSON object"))?;
        dataset
            .push_row(row)
            .map_err(|e| malformed(path, Some(idx + 1), e.to_string()))?;
    }
    Ok(dataset)
}

pub fn encode_jsonl(dataset: &Dataset) -> Vec<u8> {
    let mut out = String::new();
    for value in dataset.to_json_rows() {
        out.push_str(&value.to_string());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn decode_json(bytes: &[u8], path: Option<&Path>) -> Result<Dataset, StorageError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(Dataset::new());
    }
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| malformed(path, Some(e.line()), e.to_string()))?;
    let items = match value {
        Value::Array(items) => items,
        _ => return Err(malformed(path, None, "expected a top-level JSON array")),
    };
    let mut dataset = Dataset::new();
    for (idx, item) in items.into_iter().enumerate() {
        let row = Row::from_json_object(item)
            .ok_or_else(|| malformed(path, None, format!("element {idx} is not an object")))?;
        dataset
            .push_row(row)
            .map_err(|e| malformed(path, None, e.to_string()))?;
    }
    Ok(dataset)
}

pub fn encode_json(dataset: &Dataset) -> Vec<u8> {
    let rows = dataset.to_json_rows();
    let mut out = serde_json::to_string_pretty(&Value::Array(rows)).expect("serializable rows");
    out.push('\n');
    out.into_bytes()
}

fn encode_csv_cell(value: &FieldValue, kind: CsvKind) -> String {
    match (kind, value) {
        (_, FieldValue::Null) => String::new(),
        (CsvKind::Text, FieldValue::Text(s)) => s.clone(),
        (CsvKind::Json, v) => v.to_json().to_string(),
        (_, v) => match v.to_json() {
            Value::String(s) => s,
            other => other.to_string(),
        },
    }
}

fn decode_csv_cell(cell: &str, kind: CsvKind, line: usize, path: Option<&Path>) -> Result<FieldValue, StorageError> {
    if cell.is_empty() {
        return Ok(FieldValue::Null);
    }
    let parse_json = |expected: &str| -> Result<FieldValue, StorageError> {
        let value: Value = serde_json::from_str(cell)
            .map_err(|e| malformed(path, Some(line), format!("cell is not valid {expected}: {e}")))?;
        Ok(FieldValue::from_json(value))
    };
    match kind {
        CsvKind::Text => Ok(FieldValue::Text(cell.to_string())),
        CsvKind::Number => match parse_json("number")? {
            v @ FieldValue::Number(_) => Ok(v),
            _ => Err(malformed(path, Some(line), format!("expected a number, got {cell:?}"))),
        },
        CsvKind::Boolean => match cell {
            "true" => Ok(FieldValue::Boolean(true)),
            "false" => Ok(FieldValue::Boolean(false)),
            _ => Err(malformed(path, Some(line), format!("expected a boolean, got {cell:?}"))),
        },
        CsvKind::Sequence | CsvKind::Object | CsvKind::Json => parse_json("JSON"),
        CsvKind::Null => Ok(FieldValue::Null),
    }
}

/// Encodes a dataset to CSV bytes plus the manifest JSON describing each
/// column's cell encoding.
pub fn encode_csv(dataset: &Dataset) -> Result<(Vec<u8>, Vec<u8>), StorageError> {
    let kinds: Vec<CsvKind> = dataset
        .columns()
        .iter()
        .map(|c| CsvKind::for_column(dataset, c))
        .collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(dataset.columns())
        .map_err(|e| StorageError::Malformed { path: None, line: None, detail: e.to_string() })?;
    for row in dataset.rows() {
        let record: Vec<String> = dataset
            .columns()
            .iter()
            .zip(&kinds)
            .map(|(column, kind)| encode_csv_cell(row.get(column), *kind))
            .collect();
        writer
            .write_record(&record)
            .map_err(|e| StorageError::Malformed { path: None, line: None, detail: e.to_string() })?;
    }
    let csv_bytes = writer
        .into_inner()
        .map_err(|e| StorageError::Malformed { path: None, line: None, detail: e.to_string() })?;

    let manifest: BTreeMap<&String, &str> = dataset
        .columns()
        .iter()
        .zip(&kinds)
        .map(|(column, kind)| (column, kind.as_str()))
        .collect();
    let manifest_value = serde_json::json!({ "columns": manifest });
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest_value).expect("serializable manifest");
    manifest_bytes.push(b'\n');
    Ok((csv_bytes, manifest_bytes))
}

fn parse_manifest(bytes: &[u8], path: Option<&Path>) -> Result<BTreeMap<String, CsvKind>, StorageError> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| malformed(path, None, format!("invalid manifest: {e}")))?;
    let columns = value
        .get("columns")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(path, None, "manifest missing \"columns\" object"))?;
    let mut out = BTreeMap::new();
    for (column, kind) in columns {
        let kind_str = kind
            .as_str()
            .ok_or_else(|| malformed(path, None, format!("manifest kind for {column:?} is not a string")))?;
        let kind = CsvKind::parse(kind_str)
            .ok_or_else(|| malformed(path, None, format!("unknown manifest kind {kind_str:?} for column {column:?}")))?;
        out.insert(column.clone(), kind);
    }
    Ok(out)
}

/// Decodes CSV bytes, applying the sidecar manifest when present. Without a
/// manifest every cell decodes as text.
pub fn decode_csv(
    bytes: &[u8],
    manifest: Option<&[u8]>,
    path: Option<&Path>,
) -> Result<Dataset, StorageError> {
    if bytes.is_empty() {
        return Ok(Dataset::new());
    }
    let kinds = match manifest {
        Some(bytes) => Some(parse_manifest(bytes, path)?),
        None => None,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| malformed(path, Some(1), e.to_string()))?
        .clone();
    let mut seen: Vec<&str> = Vec::new();
    for name in headers.iter() {
        if name.is_empty() {
            return Err(malformed(path, Some(1), "empty column name in header"));
        }
        if seen.contains(&name) {
            return Err(malformed(path, Some(1), format!("duplicate column name {name:?} in header")));
        }
        seen.push(name);
    }

    let mut dataset = Dataset::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| malformed(path, Some(line), e.to_string()))?;
        if record.len() != headers.len() {
            return Err(malformed(
                path,
                Some(line),
                format!("expected {} fields, got {}", headers.len(), record.len()),
            ));
        }
        let mut row = Row::new();
        for (column, cell) in headers.iter().zip(record.iter()) {
            let kind = kinds
                .as_ref()
                .and_then(|k| k.get(column).copied())
                .unwrap_or(CsvKind::Text);
            let value = if kinds.is_some() {
                decode_csv_cell(cell, kind, line, path)?
            } else {
                // No manifest: every cell is text, including empties.
                FieldValue::Text(cell.to_string())
            };
            row.set(column, value);
        }
        dataset
            .push_row(row)
            .map_err(|e| malformed(path, Some(line), e.to_string()))?;
    }
    // Preserve header order even for empty files.
    if dataset.is_empty() {
        let columns: Vec<String> = headers.iter().map(str::to_string).collect();
        dataset = Dataset::with_columns(columns)
            .map_err(|e| malformed(path, Some(1), e.to_string()))?;
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn typed_dataset() -> Dataset {
        Dataset::from_rows(vec![
            Row::new()
                .with("text", "plain")
                .with("n", 3i64)
                .with("flag", true)
                .with("seq", FieldValue::Sequence(vec![FieldValue::int(1), FieldValue::int(2)])),
            Row::new()
                .with("text", "with,comma \"quoted\"")
                .with("n", 2.5)
                .with("flag", false)
                .with("seq", FieldValue::Null),
        ])
        .unwrap()
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = typed_dataset();
        let bytes = encode_jsonl(&ds);
        let back = decode_jsonl(&bytes, None).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn json_round_trip() {
        let ds = typed_dataset();
        let bytes = encode_json(&ds);
        let back = decode_json(&bytes, None).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_round_trip_with_manifest() {
        let ds = typed_dataset();
        let (csv_bytes, manifest) = encode_csv(&ds).unwrap();
        let back = decode_csv(&csv_bytes, Some(&manifest), None).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_without_manifest_reads_all_text() {
        let bytes = b"a,b\n1,x\n2,y\n";
        let ds = decode_csv(bytes, None, None).unwrap();
        assert_eq!(ds.cell(0, "a"), &FieldValue::text("1"));
        assert_eq!(ds.cell(1, "b"), &FieldValue::text("y"));
    }

    #[test]
    fn csv_duplicate_header_is_malformed() {
        let bytes = b"a,b,a\n1,2,3\n";
        let err = decode_csv(bytes, None, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate column name"), "{msg}");
        assert!(msg.contains("\"a\""), "{msg}");
    }

    #[test]
    fn jsonl_reports_offending_line() {
        let bytes = b"{\"a\": 1}\nnot json\n";
        let err = decode_jsonl(bytes, None).unwrap_err();
        match err {
            StorageError::Malformed { line, .. } => assert_eq!(line, Some(2)),
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn json_requires_top_level_array() {
        let err = decode_json(b"{\"a\": 1}", None).unwrap_err();
        assert!(err.to_string().contains("top-level JSON array"));
    }

    #[test]
    fn mixed_kind_column_uses_json_cells() {
        let ds = Dataset::from_rows(vec![
            Row::new().with("v", "text"),
            Row::new().with("v", 3i64),
        ])
        .unwrap();
        let (csv_bytes, manifest) = encode_csv(&ds).unwrap();
        let manifest_value: Value = serde_json::from_slice(&manifest).unwrap();
        assert_eq!(manifest_value["columns"]["v"], "json");
        let back = decode_csv(&csv_bytes, Some(&manifest), None).unwrap();
        assert_eq!(back, ds);
    }
}
