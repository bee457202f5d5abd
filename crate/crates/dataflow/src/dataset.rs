//! The canonical tabular dataset: ordered rows of named, kind-tagged cells.

use crate::value::{FieldValue, ValueKind};
use serde_json::Value;

static NULL: FieldValue = FieldValue::Null;

/// One data sample: a mapping from column name to cell value, preserving
/// insertion order. A column absent from the row reads as null. Rows carry
/// few columns, so lookup is a linear scan.
#[derive(Debug, Clone, Default)]
pub struct Row {
    cells: Vec<(String, FieldValue)>,
}

impl Row {
    pub fn new() -> Row {
        Row::default()
    }

    pub fn set(&mut self, column: impl Into<String>, value: impl Into<FieldValue>) {
        let column = column.into();
        let value = value.into();
        if let Some(entry) = self.cells.iter_mut().find(|(c, _)| *c == column) {
            entry.1 = value;
        } else {
            self.cells.push((column, value));
        }
    }

    pub fn with(mut self, column: impl Into<String>, value: impl Into<FieldValue>) -> Row {
        self.set(column, value);
        self
    }

    pub fn get(&self, column: &str) -> &FieldValue {
        self.cells
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, v)| v)
            .unwrap_or(&NULL)
    }

    pub fn remove(&mut self, column: &str) -> Option<FieldValue> {
        let idx = self.cells.iter().position(|(c, _)| c == column)?;
        Some(self.cells.remove(idx).1)
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().map(|(c, _)| c.as_str())
    }

    /// Builds a row from a JSON object, preserving key order. Non-object
    /// values are rejected by the storage codecs before reaching this point.
    pub fn from_json_object(value: Value) -> Option<Row> {
        match value {
            Value::Object(map) => {
                let mut row = Row::new();
                for (k, v) in map {
                    row.set(k, FieldValue::from_json(v));
                }
                Some(row)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum DatasetError {
    #[error("column {name:?} not found; available columns: {available:?}")]
    MissingColumn { name: String, available: Vec<String> },
    #[error("column {0:?} already exists")]
    ColumnExists(String),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("column names must be non-empty")]
    EmptyColumnName,
    #[error("new column {name:?} has {got} values but the dataset has {expected} rows")]
    LengthMismatch { name: String, expected: usize, got: usize },
}

/// Ordered rows by named columns. Column order is insertion order and row
/// order is stable across read/write round trips.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    columns: Vec<String>,
    rows: Vec<Row>,
    provenance: Option<String>,
}

impl Dataset {
    pub fn new() -> Dataset {
        Dataset::default()
    }

    /// Discovers columns in first-seen order across the rows.
    pub fn from_rows(rows: Vec<Row>) -> Result<Dataset, DatasetError> {
        let mut ds = Dataset::new();
        ds.append_rows(rows)?;
        Ok(ds)
    }

    /// An empty dataset with a fixed column set.
    pub fn with_columns(columns: Vec<String>) -> Result<Dataset, DatasetError> {
        let mut ds = Dataset::new();
        for name in &columns {
            if name.is_empty() {
                return Err(DatasetError::EmptyColumnName);
            }
            if ds.has_column(name) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
            ds.columns.push(name.clone());
        }
        Ok(ds)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &Row {
        &self.rows[index]
    }

    pub fn cell(&self, row: usize, column: &str) -> &FieldValue {
        self.rows[row].get(column)
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn set_provenance(&mut self, provenance: impl Into<String>) {
        self.provenance = Some(provenance.into());
    }

    fn ensure_column(&mut self, name: &str) -> Result<(), DatasetError> {
        if name.is_empty() {
            return Err(DatasetError::EmptyColumnName);
        }
        if !self.has_column(name) {
            self.columns.push(name.to_string());
        }
        Ok(())
    }

    /// Appends rows; column names introduced by the new rows extend the
    /// column set in first-seen order.
    pub fn append_rows(&mut self, rows: Vec<Row>) -> Result<(), DatasetError> {
        for row in &rows {
            let names: Vec<String> = row.columns().map(str::to_string).collect();
            for name in &names {
                self.ensure_column(name)?;
            }
        }
        self.rows.extend(rows);
        Ok(())
    }

    pub fn push_row(&mut self, row: Row) -> Result<(), DatasetError> {
        self.append_rows(vec![row])
    }

    /// Adds a whole new column. The value sequence length must equal the
    /// current row count and the name must not already exist.
    pub fn add_column(
        &mut self,
        name: &str,
        values: Vec<FieldValue>,
    ) -> Result<(), DatasetError> {
        if name.is_empty() {
            return Err(DatasetError::EmptyColumnName);
        }
        if self.has_column(name) {
            return Err(DatasetError::ColumnExists(name.to_string()));
        }
        if values.len() != self.rows.len() {
            return Err(DatasetError::LengthMismatch {
                name: name.to_string(),
                expected: self.rows.len(),
                got: values.len(),
            });
        }
        self.columns.push(name.to_string());
        for (row, value) in self.rows.iter_mut().zip(values) {
            row.set(name, value);
        }
        Ok(())
    }

    /// Sets a whole column, creating it or overwriting an existing one.
    /// The value sequence length must equal the current row count.
    pub fn set_column(&mut self, name: &str, values: Vec<FieldValue>) -> Result<(), DatasetError> {
        if name.is_empty() {
            return Err(DatasetError::EmptyColumnName);
        }
        if values.len() != self.rows.len() {
            return Err(DatasetError::LengthMismatch {
                name: name.to_string(),
                expected: self.rows.len(),
                got: values.len(),
            });
        }
        if !self.has_column(name) {
            self.columns.push(name.to_string());
        }
        for (row, value) in self.rows.iter_mut().zip(values) {
            row.set(name, value);
        }
        Ok(())
    }

    /// Restricts the dataset to the selected columns, preserving their
    /// order as given. Every selected column must exist.
    pub fn select(&self, selection: &[String]) -> Result<Dataset, DatasetError> {
        for name in selection {
            if !self.has_column(name) {
                return Err(DatasetError::MissingColumn {
                    name: name.clone(),
                    available: self.columns.clone(),
                });
            }
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut out = Row::new();
                for name in selection {
                    let value = row.get(name);
                    if !value.is_null() {
                        out.set(name.clone(), value.clone());
                    }
                }
                out
            })
            .collect();
        Ok(Dataset {
            columns: selection.to_vec(),
            rows,
            provenance: self.provenance.clone(),
        })
    }

    /// Column values in row order, nulls for absent cells.
    pub fn column_values(&self, name: &str) -> Result<Vec<FieldValue>, DatasetError> {
        if !self.has_column(name) {
            return Err(DatasetError::MissingColumn {
                name: name.to_string(),
                available: self.columns.clone(),
            });
        }
        Ok(self.rows.iter().map(|r| r.get(name).clone()).collect())
    }

    /// The set of non-null kinds observed in a column.
    pub fn column_kinds(&self, name: &str) -> Vec<ValueKind> {
        let mut kinds = Vec::new();
        for row in &self.rows {
            let kind = row.get(name).kind();
            if kind != ValueKind::Null && !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        kinds
    }

    /// One JSON object per row with every column present (explicit nulls),
    /// keys in column order. This is the canonical form used for digests.
    pub fn canonical_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let mut map = serde_json::Map::new();
            for column in &self.columns {
                map.insert(column.clone(), row.get(column).to_json());
            }
            out.push_str(&Value::Object(map).to_string());
            out.push('\n');
        }
        out
    }

    /// Rows as JSON objects, omitting null cells, keys in column order.
    pub fn to_json_rows(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let mut map = serde_json::Map::new();
                for column in &self.columns {
                    let value = row.get(column);
                    if !value.is_null() {
                        map.insert(column.clone(), value.to_json());
                    }
                }
                Value::Object(map)
            })
            .collect()
    }
}

// Missing cells compare equal to explicit nulls, so row equality goes
// through `cell()` rather than the underlying maps.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        if self.columns != other.columns || self.rows.len() != other.rows.len() {
            return false;
        }
        for i in 0..self.rows.len() {
            for column in &self.columns {
                if self.cell(i, column) != other.cell(i, column) {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::from_rows(vec![
            Row::new().with("text", "a"),
            Row::new().with("text", "b").with("score", 2i64),
            Row::new().with("text", "c"),
        ])
        .unwrap()
    }

    #[test]
    fn columns_discovered_in_first_seen_order() {
        let ds = sample();
        assert_eq!(ds.columns(), ["text", "score"]);
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn absent_cell_reads_as_null() {
        let ds = sample();
        assert!(ds.cell(0, "score").is_null());
        assert_eq!(ds.cell(1, "score"), &FieldValue::int(2));
    }

    #[test]
    fn add_column_requires_matching_length() {
        let mut ds = sample();
        let err = ds
            .add_column("z", vec![FieldValue::int(1), FieldValue::int(2)])
            .unwrap_err();
        assert!(matches!(err, DatasetError::LengthMismatch { .. }));
        assert_eq!(ds.columns(), ["text", "score"]);
    }

    #[test]
    fn add_column_rejects_existing_name() {
        let mut ds = sample();
        let values = vec![FieldValue::Null; 3];
        assert_eq!(
            ds.add_column("text", values),
            Err(DatasetError::ColumnExists("text".into()))
        );
    }

    #[test]
    fn select_projects_and_reports_missing() {
        let ds = sample();
        let projected = ds.select(&["text".to_string()]).unwrap();
        assert_eq!(projected.columns(), ["text"]);
        assert_eq!(projected.len(), 3);

        let err = ds.select(&["nope".to_string()]).unwrap_err();
        match err {
            DatasetError::MissingColumn { name, available } => {
                assert_eq!(name, "nope");
                assert_eq!(available, vec!["text".to_string(), "score".to_string()]);
            }
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn equality_ignores_null_representation() {
        let explicit = Dataset::from_rows(vec![
            Row::new().with("a", 1i64).with("b", FieldValue::Null),
        ])
        .unwrap();
        let mut implicit = Dataset::new();
        implicit
            .append_rows(vec![Row::new().with("a", 1i64)])
            .unwrap();
        implicit.add_column("b", vec![FieldValue::Null]).unwrap();
        assert_eq!(explicit, implicit);
    }

    #[test]
    fn canonical_jsonl_is_stable() {
        let ds = sample();
        let text = ds.canonical_jsonl();
        assert_eq!(
            text,
            "{\"text\":\"a\",\"score\":null}\n{\"text\":\"b\",\"score\":2}\n{\"text\":\"c\",\"score\":null}\n"
        );
    }
}
