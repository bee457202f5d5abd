//! Database connector contract and the embedded SQLite implementation.
//!
//! The contract is the extension point for other engines: connect to a
//! location, execute SQL with a timeout and get back an order-insensitive
//! result multiset, and retrieve full schema metadata (creation statements,
//! columns, sampled values). The shipped connector is serial-only; the
//! engine never issues concurrent calls against it.

use rusqlite::Connection;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum ConnectorError {
    #[error("cannot open database {location:?}: {detail}")]
    Open { location: String, detail: String },
    #[error("schema retrieval failed: {0}")]
    Schema(String),
}

/// One cell of a query result.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl SqlValue {
    fn from_rusqlite(value: rusqlite::types::Value) -> SqlValue {
        use rusqlite::types::Value;
        match value {
            Value::Null => SqlValue::Null,
            Value::Integer(i) => SqlValue::Integer(i),
            Value::Real(f) => SqlValue::Real(f),
            Value::Text(s) => SqlValue::Text(s),
            Value::Blob(b) => SqlValue::Blob(b),
        }
    }

    /// SQL literal rendering, used when sampled values feed prompts.
    pub fn literal(&self) -> String {
        match self {
            SqlValue::Null => "NULL".to_string(),
            SqlValue::Integer(i) => i.to_string(),
            SqlValue::Real(f) => f.to_string(),
            SqlValue::Text(s) => format!("'{}'", s.replace('\'', "''")),
            SqlValue::Blob(b) => format!("X'{}'", hex::encode(b)),
        }
    }
}

impl fmt::Display for SqlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

/// Execution failures, each distinguished so filters can record why a row
/// was dropped.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecFailure {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("query exceeded the {}ms timeout", .0.as_millis())]
    Timeout(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
    pub wall: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub declared_type: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableInfo {
    pub name: String,
    /// Creation statement verbatim from the catalog.
    pub create_sql: String,
    pub columns: Vec<ColumnMeta>,
    /// Up to `sample_size` distinct non-null values per column.
    pub samples: BTreeMap<String, Vec<SqlValue>>,
}

/// Relational schema snapshot feeding Text-to-SQL prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaInfo {
    pub dialect: String,
    pub tables: Vec<TableInfo>,
}

impl SchemaInfo {
    /// Prompt rendering: creation statements followed by sampled values.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for table in &self.tables {
            out.push_str(table.create_sql.trim());
            if !out.ends_with(';') {
                out.push(';');
            }
            out.push('\n');
            if !table.samples.is_empty() {
                let mut parts = Vec::new();
                for column in &table.columns {
                    if let Some(values) = table.samples.get(&column.name) {
                        if !values.is_empty() {
                            let rendered: Vec<String> = values.iter().map(SqlValue::literal).collect();
                            parts.push(format!("{}: {}", column.name, rendered.join(", ")));
                        }
                    }
                }
                if !parts.is_empty() {
                    out.push_str(&format!("-- sample values — {}\n", parts.join("; ")));
                }
            }
        }
        out
    }

    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// The cross-database contract: execute SQL and retrieve schema metadata.
/// Implementations declare whether concurrent `execute_sql` calls are safe;
/// the engine serializes calls against connectors that are not.
pub trait DatabaseConnector {
    fn execute_sql(&mut self, sql: &str, timeout: Duration) -> Result<ExecResult, ExecFailure>;
    fn get_schema(&mut self, sample_size: usize) -> Result<SchemaInfo, ConnectorError>;
    fn concurrency_safe(&self) -> bool {
        false
    }
}

/// Embedded SQLite connector. Serial-only.
pub struct SqliteConnector {
    conn: Connection,
}

impl SqliteConnector {
    /// Opens a database file, or an in-memory database for `":memory:"`.
    pub fn connect(location: &str) -> Result<SqliteConnector, ConnectorError> {
        let conn = if location == ":memory:" {
            Connection::open_in_memory()
        } else {
            Connection::open(Path::new(location))
        }
        .map_err(|e| ConnectorError::Open { location: location.to_string(), detail: e.to_string() })?;
        Ok(SqliteConnector { conn })
    }

    /// In-memory database initialized from a SQL script. Test fixture and
    /// sample-database builder.
    pub fn connect_with_script(script: &str) -> Result<SqliteConnector, ConnectorError> {
        let connector = SqliteConnector::connect(":memory:")?;
        connector
            .conn
            .execute_batch(script)
            .map_err(|e| ConnectorError::Open { location: ":memory:".into(), detail: e.to_string() })?;
        Ok(connector)
    }

    /// Creates a database file from a SQL script, replacing any existing
    /// file at the path.
    pub fn create_file_from_script(path: &Path, script: &str) -> Result<(), ConnectorError> {
        if path.exists() {
            std::fs::remove_file(path).map_err(|e| ConnectorError::Open {
                location: path.display().to_string(),
                detail: e.to_string(),
            })?;
        }
        let connector = SqliteConnector::connect(&path.display().to_string())?;
        connector.conn.execute_batch(script).map_err(|e| ConnectorError::Open {
            location: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Ok(())
    }
}

impl DatabaseConnector for SqliteConnector {
    fn execute_sql(&mut self, sql: &str, timeout: Duration) -> Result<ExecResult, ExecFailure> {
        let started = Instant::now();
        let expired = Arc::new(AtomicBool::new(false));
        {
            let expired = expired.clone();
            let deadline = started + timeout;
            self.conn.progress_handler(
                100,
                Some(move || {
                    if Instant::now() >= deadline {
                        expired.store(true, Ordering::SeqCst);
                        true
                    } else {
                        false
                    }
                }),
            );
        }
        let outcome = (|| -> Result<ExecResult, ExecFailure> {
            let mut stmt = self.conn.prepare(sql).map_err(|e| {
                let detail = e.to_string();
                if detail.contains("syntax error") {
                    ExecFailure::Syntax(detail)
                } else {
                    ExecFailure::Runtime(detail)
                }
            })?;
            let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
            let column_count = columns.len();
            let mut rows_out = Vec::new();
            let mut rows = stmt.query([]).map_err(|e| ExecFailure::Runtime(e.to_string()))?;
            loop {
                match rows.next() {
                    Ok(Some(row)) => {
                        let mut cells = Vec::with_capacity(column_count);
                        for i in 0..column_count {
                            let value: rusqlite::types::Value =
                                row.get(i).map_err(|e| ExecFailure::Runtime(e.to_string()))?;
                            cells.push(SqlValue::from_rusqlite(value));
                        }
                        rows_out.push(cells);
                    }
                    Ok(None) => break,
                    Err(e) => {
                        if expired.load(Ordering::SeqCst) {
                            return Err(ExecFailure::Timeout(timeout));
                        }
                        return Err(ExecFailure::Runtime(e.to_string()));
                    }
                }
            }
            Ok(ExecResult { columns, rows: rows_out, wall: started.elapsed() })
        })();
        self.conn.progress_handler(100, None::<fn() -> bool>);
        if outcome.is_err() && expired.load(Ordering::SeqCst) {
            return Err(ExecFailure::Timeout(timeout));
        }
        outcome
    }

    fn get_schema(&mut self, sample_size: usize) -> Result<SchemaInfo, ConnectorError> {
        let schema_err = |e: rusqlite::Error| ConnectorError::Schema(e.to_string());
        let mut tables = Vec::new();
        let mut stmt = self
            .conn
            .prepare(
                "SELECT name, sql FROM sqlite_master \
                 WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
            )
            .map_err(schema_err)?;
        let listed: Vec<(String, String)> = stmt
            .query_map([], |row| Ok((row.get::<_, String>(0)?, row.get::<_, String>(1)?)))
            .map_err(schema_err)?
            .collect::<Result<_, _>>()
            .map_err(schema_err)?;
        drop(stmt);

        for (name, create_sql) in listed {
            let quoted = quote_identifier(&name);
            let mut columns = Vec::new();
            let mut info_stmt = self
                .conn
                .prepare(&format!("PRAGMA table_info({quoted})"))
                .map_err(schema_err)?;
            let metas: Vec<ColumnMeta> = info_stmt
                .query_map([], |row| {
                    Ok(ColumnMeta {
                        name: row.get::<_, String>(1)?,
                        declared_type: row.get::<_, String>(2)?,
                    })
                })
                .map_err(schema_err)?
                .collect::<Result<_, _>>()
                .map_err(schema_err)?;
            drop(info_stmt);
            columns.extend(metas);

            let mut samples = BTreeMap::new();
            for column in &columns {
                let col = quote_identifier(&column.name);
                let sql = format!(
                    "SELECT DISTINCT {col} FROM {quoted} WHERE {col} IS NOT NULL ORDER BY 1 LIMIT {sample_size}"
                );
                let mut sample_stmt = self.conn.prepare(&sql).map_err(schema_err)?;
                let values: Vec<SqlValue> = sample_stmt
                    .query_map([], |row| {
                        row.get::<_, rusqlite::types::Value>(0).map(SqlValue::from_rusqlite)
                    })
                    .map_err(schema_err)?
                    .collect::<Result<_, _>>()
                    .map_err(schema_err)?;
                samples.insert(column.name.clone(), values);
            }
            tables.push(TableInfo { name, create_sql, columns, samples });
        }
        Ok(SchemaInfo { dialect: "sqlite".to_string(), tables })
    }
}

fn quote_identifier(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Opens the connector for a location. The embedded SQLite engine handles
/// every location today; other engines plug in by implementing
/// [`DatabaseConnector`] and extending this dispatch.
pub fn open_connector(location: &str) -> Result<Box<dyn DatabaseConnector>, ConnectorError> {
    Ok(Box::new(SqliteConnector::connect(location)?))
}

/// Normalized cell for multiset comparison: numeric widening (integers and
/// reals compare by value) and text trimming, per the execution-accuracy
/// convention.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum NormCell {
    Null,
    Number(f64),
    Text(String),
    Blob(Vec<u8>),
}

fn normalize(value: &SqlValue) -> NormCell {
    match value {
        SqlValue::Null => NormCell::Null,
        SqlValue::Integer(i) => NormCell::Number(*i as f64),
        SqlValue::Real(f) => NormCell::Number(*f),
        SqlValue::Text(s) => NormCell::Text(s.trim().to_string()),
        SqlValue::Blob(b) => NormCell::Blob(b.clone()),
    }
}

fn rank(cell: &NormCell) -> u8 {
    match cell {
        NormCell::Null => 0,
        NormCell::Number(_) => 1,
        NormCell::Text(_) => 2,
        NormCell::Blob(_) => 3,
    }
}

fn compare_cells(a: &NormCell, b: &NormCell) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a, b) {
        (NormCell::Number(x), NormCell::Number(y)) => x.total_cmp(y),
        (NormCell::Text(x), NormCell::Text(y)) => x.cmp(y),
        (NormCell::Blob(x), NormCell::Blob(y)) => x.cmp(y),
        _ => rank(a).cmp(&rank(b)),
    }
    .then(Ordering::Equal)
}

/// Order-insensitive result equality: same number of rows, and the sorted
/// normalized rows match pairwise with column order respected.
pub fn results_match(a: &[Vec<SqlValue>], b: &[Vec<SqlValue>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sort_rows = |rows: &[Vec<SqlValue>]| -> Vec<Vec<NormCell>> {
        let mut normalized: Vec<Vec<NormCell>> =
            rows.iter().map(|row| row.iter().map(normalize).collect()).collect();
        normalized.sort_by(|x, y| {
            for (a, b) in x.iter().zip(y.iter()) {
                let ord = compare_cells(a, b);
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            x.len().cmp(&y.len())
        });
        normalized
    };
    sort_rows(a) == sort_rows(b)
}
