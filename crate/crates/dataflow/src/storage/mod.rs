//! Mediated tabular storage: every operator read and write goes through a
//! [`StorageSession`], which tracks revisions, enforces single-writer access
//! and persists file-backed sessions atomically (write temp, then rename).

mod format;

pub use format::{csv_manifest_path, StorageFormat};

use crate::dataset::{Dataset, DatasetError, Row};
use crate::digest::sha256_hex;
use crate::value::FieldValue;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed file{}{}: {detail}", path.as_deref().map(|p| format!(" {}", p.display())).unwrap_or_default(), line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Malformed {
        path: Option<PathBuf>,
        line: Option<usize>,
        detail: String,
    },
    #[error("unsupported storage format {0:?} (expected json, jsonl or csv)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("another writer holds this session")]
    ConcurrentWrite,
    #[error("snapshot not found at {0}")]
    MissingSnapshot(PathBuf),
    #[error("snapshot digest mismatch for stage {stage_id:?}: expected {expected}, got {actual}")]
    DigestMismatch {
        stage_id: String,
        expected: String,
        actual: String,
    },
    #[error("injected write failure")]
    InjectedWriteFailure,
}

/// A write applied to the current dataset revision.
#[derive(Debug, Clone)]
pub enum WriteDelta {
    /// Add a whole column; value count must equal the current row count.
    NewColumn { name: String, values: Vec<FieldValue> },
    /// Append rows; new column names extend the column set.
    AppendRows(Vec<Row>),
    /// Replace the dataset wholesale.
    Replace(Dataset),
}

/// Points at a materialized snapshot of the dataset for one pipeline stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointRef {
    pub stage_id: String,
    pub digest: String,
    pub data_path: PathBuf,
    pub meta_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteFault {
    /// Fail before anything is written.
    BeforeWrite,
    /// Fail after the temp file is written but before the rename.
    BeforeRename,
}

#[derive(Debug, Clone)]
enum Backend {
    Memory,
    File { path: PathBuf, format: StorageFormat },
}

struct State {
    dataset: Dataset,
    revision: u64,
}

struct SessionInner {
    backend: Backend,
    state: RwLock<State>,
    write_gate: Mutex<()>,
    fault: Mutex<Option<WriteFault>>,
}

/// Handle on one dataset. Clones share the same underlying session, so the
/// single-writer rule applies across clones. Reads return value snapshots
/// that later writes never mutate.
#[derive(Clone)]
pub struct StorageSession {
    inner: Arc<SessionInner>,
}

impl StorageSession {
    fn from_parts(backend: Backend, dataset: Dataset) -> StorageSession {
        StorageSession {
            inner: Arc::new(SessionInner {
                backend,
                state: RwLock::new(State { dataset, revision: 0 }),
                write_gate: Mutex::new(()),
                fault: Mutex::new(None),
            }),
        }
    }

    /// An empty in-memory session.
    pub fn in_memory() -> StorageSession {
        StorageSession::from_parts(Backend::Memory, Dataset::new())
    }

    /// An in-memory session seeded with a dataset.
    pub fn in_memory_with(dataset: Dataset) -> StorageSession {
        StorageSession::from_parts(Backend::Memory, dataset)
    }

    /// Opens a file-backed session. A missing or empty file yields an empty
    /// dataset; an existing file must parse under the given format.
    pub fn open(path: impl Into<PathBuf>, format: StorageFormat) -> Result<StorageSession, StorageError> {
        let path = path.into();
        let dataset = match fs::read(&path) {
            Ok(bytes) => decode(&bytes, format, &path)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Dataset::new(),
            Err(e) => return Err(StorageError::Io { path, source: e }),
        };
        let mut dataset = dataset;
        dataset.set_provenance(path.display().to_string());
        Ok(StorageSession::from_parts(Backend::File { path, format }, dataset))
    }

    /// The current dataset, optionally restricted to a column selection.
    /// The returned value is a snapshot: later writes do not mutate it.
    pub fn read(&self, selection: Option<&[String]>) -> Result<Dataset, StorageError> {
        let state = self.inner.state.read().expect("storage lock poisoned");
        match selection {
            Some(columns) => Ok(state.dataset.select(columns)?),
            None => Ok(state.dataset.clone()),
        }
    }

    pub fn revision(&self) -> u64 {
        self.inner.state.read().expect("storage lock poisoned").revision
    }

    /// Applies a delta and persists it. Returns the new row count. Fails
    /// without changing the session (or the backing file) on any error, and
    /// rejects concurrent writers instead of blocking.
    pub fn write(&self, delta: WriteDelta) -> Result<usize, StorageError> {
        let _gate = match self.inner.write_gate.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(StorageError::ConcurrentWrite),
            Err(TryLockError::Poisoned(_)) => panic!("storage write gate poisoned"),
        };

        let mut next = {
            let state = self.inner.state.read().expect("storage lock poisoned");
            state.dataset.clone()
        };
        match delta {
            WriteDelta::NewColumn { name, values } => next.add_column(&name, values)?,
            WriteDelta::AppendRows(rows) => next.append_rows(rows)?,
            WriteDelta::Replace(dataset) => {
                let provenance = next.provenance().map(str::to_string);
                next = dataset;
                if let Some(p) = provenance {
                    next.set_provenance(p);
                }
            }
        }

        if let Backend::File { path, format } = &self.inner.backend {
            self.persist(&next, path, *format)?;
        } else if let Some(fault) = self.inner.fault.lock().expect("fault lock poisoned").take() {
            let _ = fault;
            return Err(StorageError::InjectedWriteFailure);
        }

        let mut state = self.inner.state.write().expect("storage lock poisoned");
        state.dataset = next;
        state.revision += 1;
        Ok(state.dataset.len())
    }

    fn persist(&self, dataset: &Dataset, path: &Path, format: StorageFormat) -> Result<(), StorageError> {
        let fault = self.inner.fault.lock().expect("fault lock poisoned").take();
        if fault == Some(WriteFault::BeforeWrite) {
            return Err(StorageError::InjectedWriteFailure);
        }
        match format {
            StorageFormat::Csv => {
                let (csv_bytes, manifest_bytes) = format::encode_csv(dataset)?;
                let manifest_path = csv_manifest_path(path);
                write_atomic(&manifest_path, &manifest_bytes, None)?;
                write_atomic(path, &csv_bytes, fault)?;
            }
            StorageFormat::Json => write_atomic(path, &format::encode_json(dataset), fault)?,
            StorageFormat::Jsonl => write_atomic(path, &format::encode_jsonl(dataset), fault)?,
        }
        Ok(())
    }

    /// Arms a one-shot write fault for the next `write()` call. Test
    /// instrumentation for the atomicity guarantees.
    pub fn inject_write_fault(&self, fault: WriteFault) {
        *self.inner.fault.lock().expect("fault lock poisoned") = Some(fault);
    }

    /// Materializes the current dataset under `dir`, keyed by `stage_id`:
    /// `<dir>/<stage_id>.jsonl` in canonical form plus
    /// `<dir>/<stage_id>.meta.json` holding the content digest.
    pub fn snapshot(&self, dir: &Path, stage_id: &str) -> Result<CheckpointRef, StorageError> {
        let dataset = self.read(None)?;
        snapshot_dataset(&dataset, dir, stage_id)
    }
}

/// Writes a dataset snapshot without going through a session.
pub fn snapshot_dataset(dataset: &Dataset, dir: &Path, stage_id: &str) -> Result<CheckpointRef, StorageError> {
    fs::create_dir_all(dir).map_err(|e| StorageError::Io { path: dir.to_path_buf(), source: e })?;
    let canonical = dataset.canonical_jsonl();
    let digest = sha256_hex(canonical.as_bytes());
    let data_path = dir.join(format!("{stage_id}.jsonl"));
    let meta_path = dir.join(format!("{stage_id}.meta.json"));
    let meta = serde_json::json!({
        "stage_id": stage_id,
        "digest": digest,
        "columns": dataset.columns(),
        "rows": dataset.len(),
    });
    write_atomic(&data_path, canonical.as_bytes(), None)?;
    write_atomic(&meta_path, format!("{meta:#}\n").as_bytes(), None)?;
    Ok(CheckpointRef { stage_id: stage_id.to_string(), digest, data_path, meta_path })
}

/// Reads back a snapshot, verifying its content digest.
pub fn restore(checkpoint: &CheckpointRef) -> Result<Dataset, StorageError> {
    let read = |path: &Path| -> Result<Vec<u8>, StorageError> {
        fs::read(path).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                StorageError::MissingSnapshot(path.to_path_buf())
            } else {
                StorageError::Io { path: path.to_path_buf(), source: e }
            }
        })
    };
    let meta_bytes = read(&checkpoint.meta_path)?;
    let meta: serde_json::Value = serde_json::from_slice(&meta_bytes).map_err(|e| StorageError::Malformed {
        path: Some(checkpoint.meta_path.clone()),
        line: None,
        detail: e.to_string(),
    })?;
    let data_bytes = read(&checkpoint.data_path)?;
    let actual = sha256_hex(&data_bytes);
    let expected = meta
        .get("digest")
        .and_then(serde_json::Value::as_str)
        .unwrap_or(&checkpoint.digest);
    if actual != expected || actual != checkpoint.digest {
        return Err(StorageError::DigestMismatch {
            stage_id: checkpoint.stage_id.clone(),
            expected: checkpoint.digest.clone(),
            actual,
        });
    }

    let columns: Vec<String> = meta
        .get("columns")
        .and_then(serde_json::Value::as_array)
        .map(|cols| {
            cols.iter()
                .filter_map(|c| c.as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    let mut dataset = Dataset::with_columns(columns)?;
    let parsed = format::decode_jsonl(&data_bytes, Some(&checkpoint.data_path))?;
    let rows: Vec<Row> = parsed.rows().to_vec();
    dataset.append_rows(rows)?;
    Ok(dataset)
}

fn decode(bytes: &[u8], format: StorageFormat, path: &Path) -> Result<Dataset, StorageError> {
    match format {
        StorageFormat::Json => format::decode_json(bytes, Some(path)),
        StorageFormat::Jsonl => format::decode_jsonl(bytes, Some(path)),
        StorageFormat::Csv => {
            let manifest_path = csv_manifest_path(path);
            let manifest = match fs::read(&manifest_path) {
                Ok(bytes) => Some(bytes),
                Err(e) if e.kind() == io::ErrorKind::NotFound => None,
                Err(e) => return Err(StorageError::Io { path: manifest_path, source: e }),
            };
            format::decode_csv(bytes, manifest.as_deref(), Some(path))
        }
    }
}

/// Saves a dataset to a file in the given format (CSV includes the sidecar
/// manifest). Same atomic write-temp-then-rename discipline as sessions.
pub fn save(dataset: &Dataset, path: &Path, format: StorageFormat) -> Result<(), StorageError> {
    match format {
        StorageFormat::Csv => {
            let (csv_bytes, manifest_bytes) = format::encode_csv(dataset)?;
            write_atomic(&csv_manifest_path(path), &manifest_bytes, None)?;
            write_atomic(path, &csv_bytes, None)
        }
        StorageFormat::Json => write_atomic(path, &format::encode_json(dataset), None),
        StorageFormat::Jsonl => write_atomic(path, &format::encode_jsonl(dataset), None),
    }
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn write_atomic(path: &Path, bytes: &[u8], fault: Option<WriteFault>) -> Result<(), StorageError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| StorageError::Io { path: dir.to_path_buf(), source: e })?;
        }
    }
    let unique = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let file_name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let temp = path.with_file_name(format!(".{file_name}.tmp-{}-{unique}", std::process::id()));
    fs::write(&temp, bytes).map_err(|e| StorageError::Io { path: temp.clone(), source: e })?;
    if fault == Some(WriteFault::BeforeRename) {
        let _ = fs::remove_file(&temp);
        return Err(StorageError::InjectedWriteFailure);
    }
    fs::rename(&temp, path).map_err(|e| {
        let _ = fs::remove_file(&temp);
        StorageError::Io { path: path.to_path_buf(), source: e }
    })
}
