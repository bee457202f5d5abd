//! Compile diagnostics. Compilation never stops at the first problem: the
//! report carries every detectable diagnostic so one round trip fixes them
//! all, and serializes to JSON for the CLI and external tooling.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticCode {
    MissingColumn,
    KindMismatch,
    DuplicateProducer,
    ModalityMismatch,
    UnknownOperator,
    BindingIncomplete,
    Cycle,
}

impl DiagnosticCode {
    pub const ALL: [DiagnosticCode; 7] = [
        DiagnosticCode::MissingColumn,
        DiagnosticCode::KindMismatch,
        DiagnosticCode::DuplicateProducer,
        DiagnosticCode::ModalityMismatch,
        DiagnosticCode::UnknownOperator,
        DiagnosticCode::BindingIncomplete,
        DiagnosticCode::Cycle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticCode::MissingColumn => "missing-column",
            DiagnosticCode::KindMismatch => "kind-mismatch",
            DiagnosticCode::DuplicateProducer => "duplicate-producer",
            DiagnosticCode::ModalityMismatch => "modality-mismatch",
            DiagnosticCode::UnknownOperator => "unknown-operator",
            DiagnosticCode::BindingIncomplete => "binding-incomplete",
            DiagnosticCode::Cycle => "cycle",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    /// Index of the offending node in the pipeline definition, when the
    /// diagnostic is attributable to one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    /// The column or role the diagnostic is about.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub explanation: String,
}

impl Diagnostic {
    pub fn error(code: DiagnosticCode, node: Option<usize>, subject: Option<String>, explanation: String) -> Diagnostic {
        Diagnostic { severity: Severity::Error, code, node, subject, explanation }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.code)?;
        if let Some(node) = self.node {
            write!(f, " node {node}")?;
        }
        if let Some(subject) = &self.subject {
            write!(f, " ({subject})")?;
        }
        write!(f, ": {}", self.explanation)
    }
}

/// A non-empty diagnostic list: compilation returns a plan xor this.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompileReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl CompileReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn len(&self) -> usize {
        self.diagnostics.len()
    }

    /// The multiset of diagnostic codes, sorted.
    pub fn codes(&self) -> Vec<DiagnosticCode> {
        let mut codes: Vec<DiagnosticCode> = self.diagnostics.iter().map(|d| d.code).collect();
        codes.sort();
        codes
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable report")
    }
}

impl fmt::Display for CompileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, diagnostic) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{diagnostic}")?;
        }
        Ok(())
    }
}
