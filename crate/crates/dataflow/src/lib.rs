//! Data-preparation pipeline engine for LLM training corpora.
//!
//! The crate is organized around a small set of abstractions that compose
//! into end-to-end synthesis workflows:
//!
//! - [`storage`]: the canonical tabular dataset plus mediated, revisioned
//!   sessions over in-memory or file-backed (JSON/JSONL/CSV) substrates,
//!   with checkpoint snapshots for resumable runs.
//! - [`serving`]: one batch entry point for LLM generation over
//!   interchangeable backends (deterministic mock, HTTP chat-completions)
//!   with bounded concurrency, retries and rate limiting.
//! - [`operator`]: the operator abstraction — descriptors, key bindings,
//!   functional-category laws and the registry.
//! - [`template`]: parameterized prompt templates with slot rendering and
//!   operator compatibility enforcement.
//! - [`pipeline`]: compile-time DAG validation with exhaustive diagnostics,
//!   deferred execution, checkpoint/resume.
//! - [`ops`]: the core operator library (refiners, filters, evaluators,
//!   generic LLM generators).
//! - [`text2sql`]: the Text-to-SQL domain pack — database connector,
//!   operators and the two shipped pipelines.
//! - [`extension`]: discovery of externally packaged operators, templates
//!   and pipelines via a manifest search path.

pub mod dataset;
pub mod digest;
pub mod extension;
pub mod operator;
pub mod ops;
pub mod pipeline;
pub mod serving;
pub mod storage;
pub mod template;
pub mod text2sql;
mod template_builtin;
pub mod value;

pub use dataset::{Dataset, DatasetError, Row};
pub use value::{FieldValue, ValueKind};
