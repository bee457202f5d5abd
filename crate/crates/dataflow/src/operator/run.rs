//! The execution side of the operator contract: behaviors run against a
//! storage session through a context that mediates reads and writes and
//! collects the evidence for the run report.

use super::{BindingError, KeyBinding, OperatorDescriptor, RunReport};
use crate::dataset::{Dataset, DatasetError, Row};
use crate::serving::{ServingError, ServingHandle};
use crate::storage::{StorageError, StorageSession, WriteDelta};
use crate::template::{TemplateError, TemplateRegistry};
use crate::value::{FieldValue, ValueKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error("binding incomplete for {0}")]
    Binding(#[from] BindingError),
    #[error("{operator:?}: bound input column {column:?} is missing; available: {available:?}")]
    MissingInputColumn {
        operator: String,
        column: String,
        available: Vec<String>,
    },
    #[error("{operator:?}: column {column:?} bound to role {role:?} holds {got} values, expected {expected}")]
    KindMismatch {
        operator: String,
        role: String,
        column: String,
        expected: ValueKind,
        got: ValueKind,
    },
    #[error("{operator:?} requires a serving backend but none was provided")]
    ServingRequired { operator: String },
    #[error("{operator:?} does not use serving but a backend was provided")]
    ServingUnexpected { operator: String },
    #[error("invalid configuration for {operator:?}: {detail}")]
    Config { operator: String, detail: String },
    #[error("{operator:?}: {row_failures} of {rows} generations failed, above the tolerated rate {threshold}")]
    FailureRateExceeded {
        operator: String,
        row_failures: usize,
        rows: usize,
        threshold: f64,
    },
    #[error("{operator:?} failed: {detail}")]
    Behavior { operator: String, detail: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Serving(#[from] ServingError),
}

/// Everything an operator factory sees at configuration time. No storage
/// session and no live backend: configuration cannot perform I/O.
pub struct OperatorInit<'a> {
    pub descriptor: &'a OperatorDescriptor,
    pub config: &'a serde_json::Value,
    pub binding: &'a KeyBinding,
    pub templates: &'a TemplateRegistry,
}

impl<'a> OperatorInit<'a> {
    pub fn config_str(&self, key: &str) -> Option<&str> {
        self.config.get(key).and_then(serde_json::Value::as_str)
    }

    pub fn config_f64(&self, key: &str) -> Option<f64> {
        self.config.get(key).and_then(serde_json::Value::as_f64)
    }

    pub fn config_u64(&self, key: &str) -> Option<u64> {
        self.config.get(key).and_then(serde_json::Value::as_u64)
    }

    pub fn config_bool(&self, key: &str) -> Option<bool> {
        self.config.get(key).and_then(serde_json::Value::as_bool)
    }

    pub fn config_error(&self, detail: impl Into<String>) -> OperatorError {
        OperatorError::Config {
            operator: self.descriptor.name.clone(),
            detail: detail.into(),
        }
    }
}

pub type OperatorFactory =
    dyn Fn(&OperatorInit<'_>) -> Result<Box<dyn OperatorBehavior>, OperatorError> + Send + Sync;

/// A configured operator ready to run. Behaviors hold no shared mutable
/// state; all parallelism flows through the serving layer.
pub trait OperatorBehavior: Send + Sync {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError>;
}

/// Mediates an operator's reads and writes during `run`, resolves role
/// bindings, and accumulates metrics and failure counts for the report.
pub struct RunContext<'a> {
    descriptor: &'a OperatorDescriptor,
    session: &'a StorageSession,
    binding: &'a KeyBinding,
    serving: Option<&'a ServingHandle>,
    seed: [u8; 32],
    metrics: BTreeMap<String, f64>,
    failures: usize,
}

impl<'a> RunContext<'a> {
    pub fn operator_name(&self) -> &str {
        &self.descriptor.name
    }

    /// The current dataset (all columns).
    pub fn read(&self) -> Result<Dataset, OperatorError> {
        Ok(self.session.read(None)?)
    }

    /// The concrete column bound to a role; errors if unbound.
    pub fn column(&self, role: &str) -> Result<&str, OperatorError> {
        self.binding.column(role).ok_or_else(|| {
            OperatorError::Binding(BindingError::UnboundInput {
                operator: self.descriptor.name.clone(),
                role: role.to_string(),
            })
        })
    }

    /// The column bound to an optional role, if any.
    pub fn column_opt(&self, role: &str) -> Option<&str> {
        self.binding.column(role)
    }

    pub fn write_replace(&self, dataset: Dataset) -> Result<usize, OperatorError> {
        Ok(self.session.write(WriteDelta::Replace(dataset))?)
    }

    pub fn write_new_column(&self, name: &str, values: Vec<FieldValue>) -> Result<usize, OperatorError> {
        Ok(self.session.write(WriteDelta::NewColumn { name: name.to_string(), values })?)
    }

    pub fn write_append(&self, rows: Vec<Row>) -> Result<usize, OperatorError> {
        Ok(self.session.write(WriteDelta::AppendRows(rows))?)
    }

    pub fn serving(&self) -> Result<&ServingHandle, OperatorError> {
        self.serving.ok_or_else(|| OperatorError::ServingRequired {
            operator: self.descriptor.name.clone(),
        })
    }

    /// Deterministic per-node RNG derived from the run seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.seed)
    }

    pub fn record_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn record_failures(&mut self, count: usize) {
        self.failures += count;
    }

    pub fn behavior_error(&self, detail: impl Into<String>) -> OperatorError {
        OperatorError::Behavior {
            operator: self.descriptor.name.clone(),
            detail: detail.into(),
        }
    }
}

fn first_row_kind_check(
    descriptor: &OperatorDescriptor,
    binding: &KeyBinding,
    dataset: &Dataset,
) -> Result<(), OperatorError> {
    // An empty dataset propagates through every node, so column existence
    // is only checkable once rows exist.
    if dataset.is_empty() {
        return Ok(());
    }
    for role in &descriptor.input_roles {
        let Some(column) = binding.column(&role.name) else { continue };
        if !dataset.has_column(column) {
            if role.required {
                return Err(OperatorError::MissingInputColumn {
                    operator: descriptor.name.clone(),
                    column: column.to_string(),
                    available: dataset.columns().to_vec(),
                });
            }
            continue;
        }
        // Compile-time inference covers the graph; runtime spot-checks the
        // first row only.
        if let (Some(expected), Some(first)) = (role.kind, dataset.rows().first()) {
            let got = first.get(column).kind();
            if got != ValueKind::Null && got != expected {
                return Err(OperatorError::KindMismatch {
                    operator: descriptor.name.clone(),
                    role: role.name.clone(),
                    column: column.to_string(),
                    expected,
                    got,
                });
            }
        }
    }
    Ok(())
}

/// Runs a configured behavior through the full contract: binding validation
/// before any read, serving presence matching the descriptor, the first-row
/// kind spot-check, then the behavior itself, and finally report assembly
/// from the observed row counts and columns.
pub fn run_operator(
    descriptor: &OperatorDescriptor,
    behavior: &dyn OperatorBehavior,
    session: &StorageSession,
    binding: &KeyBinding,
    serving: Option<&ServingHandle>,
    seed: [u8; 32],
) -> Result<RunReport, OperatorError> {
    binding.validate_against(descriptor)?;
    if descriptor.requires_serving && serving.is_none() {
        return Err(OperatorError::ServingRequired { operator: descriptor.name.clone() });
    }
    if !descriptor.requires_serving && serving.is_some() {
        return Err(OperatorError::ServingUnexpected { operator: descriptor.name.clone() });
    }

    let before = session.read(None)?;
    first_row_kind_check(descriptor, binding, &before)?;
    let rows_in = before.len();
    let columns_before: BTreeSet<String> = before.columns().iter().cloned().collect();

    let mut ctx = RunContext {
        descriptor,
        session,
        binding,
        serving,
        seed,
        metrics: BTreeMap::new(),
        failures: 0,
    };
    behavior.run(&mut ctx)?;

    let after = session.read(None)?;
    let columns_after: BTreeSet<String> = after.columns().iter().cloned().collect();
    Ok(RunReport {
        operator: descriptor.name.clone(),
        rows_in,
        rows_out: after.len(),
        columns_added: columns_after.difference(&columns_before).cloned().collect(),
        declared_outputs: binding.output_columns(descriptor),
        dataset_metrics: ctx.metrics,
        failures: ctx.failures,
    })
}
