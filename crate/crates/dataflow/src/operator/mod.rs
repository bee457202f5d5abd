//! The operator abstraction: descriptors carrying the three categorization
//! dimensions (functional, modality, core-vs-domain), key bindings from
//! abstract roles to concrete columns, the naming-convention and
//! category-law checks, and the registry with its two-phase
//! configure-then-run execution contract.

mod registry;
mod run;

pub use registry::{Registry, RegistryEntry, RegistryError};
pub use run::{run_operator, OperatorBehavior, OperatorError, OperatorFactory, OperatorInit, RunContext};

use crate::value::ValueKind;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// The generate–evaluate–filter–refine paradigm, with generation split by
/// whether it adds fields or rows and evaluation split by granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalCategory {
    GenerateField,
    GenerateRows,
    EvaluateSample,
    EvaluateDataset,
    Filter,
    Refine,
}

impl FunctionalCategory {
    pub const ALL: [FunctionalCategory; 6] = [
        FunctionalCategory::GenerateField,
        FunctionalCategory::GenerateRows,
        FunctionalCategory::EvaluateSample,
        FunctionalCategory::EvaluateDataset,
        FunctionalCategory::Filter,
        FunctionalCategory::Refine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionalCategory::GenerateField => "generate_field",
            FunctionalCategory::GenerateRows => "generate_rows",
            FunctionalCategory::EvaluateSample => "evaluate_sample",
            FunctionalCategory::EvaluateDataset => "evaluate_dataset",
            FunctionalCategory::Filter => "filter",
            FunctionalCategory::Refine => "refine",
        }
    }

    pub fn parse(s: &str) -> Option<FunctionalCategory> {
        FunctionalCategory::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// The operator-name suffix this category requires.
    pub fn required_suffix(&self) -> &'static str {
        match self {
            FunctionalCategory::GenerateField => "Generator",
            FunctionalCategory::GenerateRows => "RowGenerator",
            FunctionalCategory::EvaluateSample => "SampleEvaluator",
            FunctionalCategory::EvaluateDataset => "DatasetEvaluator",
            FunctionalCategory::Filter => "Filter",
            FunctionalCategory::Refine => "Refiner",
        }
    }
}

impl fmt::Display for FunctionalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Visual,
    Document,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Visual => "visual",
            Modality::Document => "document",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s {
            "text" => Some(Modality::Text),
            "visual" => Some(Modality::Visual),
            "document" => Some(Modality::Document),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Core,
    Domain,
}

impl Tier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Core => "core",
            Tier::Domain => "domain",
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        match s {
            "core" => Some(Tier::Core),
            "domain" => Some(Tier::Domain),
            _ => None,
        }
    }
}

/// One declared input of an operator. `kind: None` accepts any kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRole {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ValueKind>,
    pub required: bool,
}

/// One declared output of an operator: the column it produces and the kind
/// it writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRole {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub name: String,
    pub category: FunctionalCategory,
    pub modality: Modality,
    pub tier: Tier,
    pub input_roles: Vec<InputRole>,
    pub output_roles: Vec<OutputRole>,
    /// Template identifiers this operator can bind; empty for non-LLM
    /// operators.
    pub allowed_prompt_templates: Vec<String>,
    pub requires_serving: bool,
}

impl OperatorDescriptor {
    pub fn input(&self, role: &str) -> Option<&InputRole> {
        self.input_roles.iter().find(|r| r.name == role)
    }

    pub fn output(&self, role: &str) -> Option<&OutputRole> {
        self.output_roles.iter().find(|r| r.name == role)
    }

    /// Structural invariants: unique role names, serving operators declare
    /// compatible templates, and only dataset evaluators may omit outputs.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for name in self
            .input_roles
            .iter()
            .map(|r| &r.name)
            .chain(self.output_roles.iter().map(|r| &r.name))
        {
            if !seen.insert(name) {
                return Err(format!("role name {name:?} is declared twice"));
            }
        }
        if self.requires_serving && self.allowed_prompt_templates.is_empty() {
            return Err("serving operators must list at least one compatible prompt template".into());
        }
        if self.output_roles.is_empty() && self.category != FunctionalCategory::EvaluateDataset {
            return Err("only dataset evaluators may declare no output roles".into());
        }
        Ok(())
    }
}

/// A naming-convention violation reported by [`check_naming`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("operator {name:?} with category {category} must end with {expected_suffix:?}")]
pub struct NamingViolation {
    pub name: String,
    pub category: String,
    pub expected_suffix: String,
}

/// Enforces the suffix table: generate_field → `Generator` (and not
/// `RowGenerator`), generate_rows → `RowGenerator`, evaluate_sample →
/// `SampleEvaluator`, evaluate_dataset → `DatasetEvaluator`, filter →
/// `Filter`, refine → `Refiner`.
pub fn check_naming(descriptor: &OperatorDescriptor) -> Result<(), NamingViolation> {
    let suffix = descriptor.category.required_suffix();
    let name = descriptor.name.as_str();
    let ok = match descriptor.category {
        FunctionalCategory::GenerateField => {
            name.ends_with("Generator") && !name.ends_with("RowGenerator")
        }
        _ => name.ends_with(suffix),
    };
    if ok {
        Ok(())
    } else {
        Err(NamingViolation {
            name: descriptor.name.clone(),
            category: descriptor.category.to_string(),
            expected_suffix: suffix.to_string(),
        })
    }
}

/// Maps abstract role names to concrete column names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyBinding {
    map: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindingError {
    #[error("required input role {role:?} of {operator:?} is not bound")]
    UnboundInput { operator: String, role: String },
    #[error("output role {role:?} of {operator:?} is not bound")]
    UnboundOutput { operator: String, role: String },
    #[error("{operator:?} binds output roles {first:?} and {second:?} to the same column {column:?}")]
    DuplicateOutputColumn {
        operator: String,
        first: String,
        second: String,
        column: String,
    },
    #[error("binding names role {role:?} which {operator:?} does not declare")]
    UnknownRole { operator: String, role: String },
    #[error("binding for role {role:?} of {operator:?} is empty")]
    EmptyColumn { operator: String, role: String },
}

impl KeyBinding {
    pub fn new() -> KeyBinding {
        KeyBinding::default()
    }

    pub fn with(mut self, role: impl Into<String>, column: impl Into<String>) -> KeyBinding {
        self.bind(role, column);
        self
    }

    pub fn bind(&mut self, role: impl Into<String>, column: impl Into<String>) {
        self.map.insert(role.into(), column.into());
    }

    pub fn column(&self, role: &str) -> Option<&str> {
        self.map.get(role).map(String::as_str)
    }

    pub fn roles(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(r, c)| (r.as_str(), c.as_str()))
    }

    /// Columns bound to the descriptor's output roles.
    pub fn output_columns(&self, descriptor: &OperatorDescriptor) -> BTreeSet<String> {
        descriptor
            .output_roles
            .iter()
            .filter_map(|role| self.column(&role.name).map(str::to_string))
            .collect()
    }

    /// Columns bound to the descriptor's input roles.
    pub fn input_columns(&self, descriptor: &OperatorDescriptor) -> BTreeSet<String> {
        descriptor
            .input_roles
            .iter()
            .filter_map(|role| self.column(&role.name).map(str::to_string))
            .collect()
    }

    /// Every required input role bound, every output role bound, no two
    /// output roles sharing a column, no unknown roles.
    pub fn validate_against(&self, descriptor: &OperatorDescriptor) -> Result<(), BindingError> {
        let operator = descriptor.name.clone();
        for (role, column) in &self.map {
            let known = descriptor.input(role).is_some() || descriptor.output(role).is_some();
            if !known {
                return Err(BindingError::UnknownRole { operator, role: role.clone() });
            }
            if column.is_empty() {
                return Err(BindingError::EmptyColumn { operator, role: role.clone() });
            }
        }
        for role in &descriptor.input_roles {
            if role.required && self.column(&role.name).is_none() {
                return Err(BindingError::UnboundInput { operator, role: role.name.clone() });
            }
        }
        let mut columns: BTreeMap<&str, &str> = BTreeMap::new();
        for role in &descriptor.output_roles {
            match self.column(&role.name) {
                None => {
                    return Err(BindingError::UnboundOutput { operator, role: role.name.clone() })
                }
                Some(column) => {
                    if let Some(previous) = columns.insert(column, &role.name) {
                        return Err(BindingError::DuplicateOutputColumn {
                            operator,
                            first: previous.to_string(),
                            second: role.name.clone(),
                            column: column.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Evidence from one operator run, used for category-law checking and the
/// run manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub operator: String,
    pub rows_in: usize,
    pub rows_out: usize,
    pub columns_added: BTreeSet<String>,
    /// Columns bound to declared output roles.
    pub declared_outputs: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dataset_metrics: BTreeMap<String, f64>,
    /// Per-row generation failures tolerated by the operator.
    #[serde(default)]
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{operator:?} violates the {category} law: {detail}")]
pub struct LawViolation {
    pub operator: String,
    pub category: String,
    pub detail: String,
}

/// Checks the row-count and column laws of each functional category:
/// filters never grow the row set and add at most their declared evaluation
/// columns, refiners preserve rows and add nothing, sample evaluators and
/// field generators preserve rows and must add columns, dataset evaluators
/// preserve rows and must emit metrics, row generators never shrink.
pub fn check_category_law(report: &RunReport, category: FunctionalCategory) -> Result<(), LawViolation> {
    let fail = |detail: String| {
        Err(LawViolation {
            operator: report.operator.clone(),
            category: category.to_string(),
            detail,
        })
    };
    match category {
        FunctionalCategory::Filter => {
            if report.rows_out > report.rows_in {
                return fail(format!("rows grew {} -> {}", report.rows_in, report.rows_out));
            }
            let undeclared: Vec<&String> = report
                .columns_added
                .difference(&report.declared_outputs)
                .collect();
            if !undeclared.is_empty() {
                return fail(format!("added undeclared columns {undeclared:?}"));
            }
        }
        FunctionalCategory::Refine => {
            if report.rows_out != report.rows_in {
                return fail(format!("row count changed {} -> {}", report.rows_in, report.rows_out));
            }
            if !report.columns_added.is_empty() {
                return fail(format!("added columns {:?}", report.columns_added));
            }
        }
        FunctionalCategory::EvaluateSample => {
            if report.rows_out != report.rows_in {
                return fail(format!("row count changed {} -> {}", report.rows_in, report.rows_out));
            }
            if report.columns_added.is_empty() {
                return fail("no evaluation column added".into());
            }
        }
        FunctionalCategory::EvaluateDataset => {
            if report.rows_out != report.rows_in {
                return fail(format!("row count changed {} -> {}", report.rows_in, report.rows_out));
            }
            if report.dataset_metrics.is_empty() {
                return fail("no dataset-level metrics emitted".into());
            }
        }
        FunctionalCategory::GenerateField => {
            if report.rows_out != report.rows_in {
                return fail(format!("row count changed {} -> {}", report.rows_in, report.rows_out));
            }
            if report.columns_added.is_empty() {
                return fail("no field added".into());
            }
        }
        FunctionalCategory::GenerateRows => {
            if report.rows_out < report.rows_in {
                return fail(format!("rows shrank {} -> {}", report.rows_in, report.rows_out));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor(name: &str, category: FunctionalCategory) -> OperatorDescriptor {
        OperatorDescriptor {
            name: name.to_string(),
            category,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole { name: "text".into(), kind: Some(ValueKind::Text), required: true }],
            output_roles: vec![OutputRole { name: "out".into(), kind: ValueKind::Text }],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }

    #[test]
    fn naming_suffix_table() {
        assert!(check_naming(&descriptor("AnswerGenerator", FunctionalCategory::GenerateField)).is_ok());
        assert!(check_naming(&descriptor("QuestionRowGenerator", FunctionalCategory::GenerateRows)).is_ok());
        assert!(check_naming(&descriptor("LengthSampleEvaluator", FunctionalCategory::EvaluateSample)).is_ok());
        assert!(check_naming(&descriptor("StatsDatasetEvaluator", FunctionalCategory::EvaluateDataset)).is_ok());
        assert!(check_naming(&descriptor("ExactDedupFilter", FunctionalCategory::Filter)).is_ok());
        assert!(check_naming(&descriptor("UrlRefiner", FunctionalCategory::Refine)).is_ok());

        // A field generator must not borrow the row-generator suffix.
        let err = check_naming(&descriptor("VariantRowGenerator", FunctionalCategory::GenerateField)).unwrap_err();
        assert_eq!(err.expected_suffix, "Generator");

        let err = check_naming(&descriptor("QuestionMaker", FunctionalCategory::GenerateField)).unwrap_err();
        assert_eq!(err.expected_suffix, "Generator");

        let err = check_naming(&descriptor("LengthFilter", FunctionalCategory::Refine)).unwrap_err();
        assert_eq!(err.expected_suffix, "Refiner");
    }

    #[test]
    fn binding_validation_catches_gaps() {
        let desc = descriptor("UrlRefiner", FunctionalCategory::Refine);

        let err = KeyBinding::new().validate_against(&desc).unwrap_err();
        assert!(matches!(err, BindingError::UnboundInput { ref role, .. } if role == "text"));

        let err = KeyBinding::new().with("text", "body").validate_against(&desc).unwrap_err();
        assert!(matches!(err, BindingError::UnboundOutput { ref role, .. } if role == "out"));

        let ok = KeyBinding::new().with("text", "body").with("out", "body");
        assert!(ok.validate_against(&desc).is_ok());

        let err = KeyBinding::new()
            .with("text", "body")
            .with("out", "body")
            .with("ghost", "x")
            .validate_against(&desc)
            .unwrap_err();
        assert!(matches!(err, BindingError::UnknownRole { ref role, .. } if role == "ghost"));
    }

    #[test]
    fn duplicate_output_columns_are_rejected() {
        let mut desc = descriptor("PairGenerator", FunctionalCategory::GenerateField);
        desc.output_roles.push(OutputRole { name: "second".into(), kind: ValueKind::Text });
        let binding = KeyBinding::new()
            .with("text", "body")
            .with("out", "same")
            .with("second", "same");
        let err = binding.validate_against(&desc).unwrap_err();
        assert!(matches!(err, BindingError::DuplicateOutputColumn { ref column, .. } if column == "same"));
    }

    #[test]
    fn category_laws() {
        let base = RunReport {
            operator: "X".into(),
            rows_in: 1000,
            rows_out: 1000,
            ..RunReport::default()
        };

        // Filter: contraction ok, growth is a violation.
        let contracted = RunReport { rows_out: 730, ..base.clone() };
        assert!(check_category_law(&contracted, FunctionalCategory::Filter).is_ok());
        let grown = RunReport { rows_out: 1001, ..base.clone() };
        assert!(check_category_law(&grown, FunctionalCategory::Filter).is_err());

        // Filter may persist only declared evaluation columns.
        let declared = RunReport {
            rows_out: 900,
            columns_added: ["score".to_string()].into(),
            declared_outputs: ["score".to_string()].into(),
            ..base.clone()
        };
        assert!(check_category_law(&declared, FunctionalCategory::Filter).is_ok());
        let undeclared = RunReport {
            rows_out: 900,
            columns_added: ["sneaky".to_string()].into(),
            ..base.clone()
        };
        assert!(check_category_law(&undeclared, FunctionalCategory::Filter).is_err());

        // Refine preserves rows and adds nothing.
        assert!(check_category_law(&base, FunctionalCategory::Refine).is_ok());
        let refined_grew = RunReport { rows_out: 1001, ..base.clone() };
        assert!(check_category_law(&refined_grew, FunctionalCategory::Refine).is_err());

        // Sample evaluation must add a column.
        let evaluated = RunReport { columns_added: ["score".to_string()].into(), ..base.clone() };
        assert!(check_category_law(&evaluated, FunctionalCategory::EvaluateSample).is_ok());
        assert!(check_category_law(&base, FunctionalCategory::EvaluateSample).is_err());

        // Dataset evaluation must emit metrics.
        let with_metrics = RunReport {
            dataset_metrics: [("mean".to_string(), 1.0)].into(),
            ..base.clone()
        };
        assert!(check_category_law(&with_metrics, FunctionalCategory::EvaluateDataset).is_ok());
        assert!(check_category_law(&base, FunctionalCategory::EvaluateDataset).is_err());

        // Row generation never shrinks.
        let expanded = RunReport { rows_out: 3000, ..base.clone() };
        assert!(check_category_law(&expanded, FunctionalCategory::GenerateRows).is_ok());
        let shrank = RunReport { rows_out: 999, ..base.clone() };
        assert!(check_category_law(&shrank, FunctionalCategory::GenerateRows).is_err());
    }

    #[test]
    fn descriptor_invariants() {
        let mut desc = descriptor("UrlRefiner", FunctionalCategory::Refine);
        assert!(desc.validate().is_ok());

        desc.input_roles.push(InputRole { name: "out".into(), kind: None, required: false });
        assert!(desc.validate().is_err());

        let mut serving = descriptor("AnswerGenerator", FunctionalCategory::GenerateField);
        serving.requires_serving = true;
        assert!(serving.validate().is_err());
        serving.allowed_prompt_templates.push("qa_answer_gen".into());
        assert!(serving.validate().is_ok());

        let mut no_outputs = descriptor("StatsDatasetEvaluator", FunctionalCategory::EvaluateDataset);
        no_outputs.output_roles.clear();
        assert!(no_outputs.validate().is_ok());
        let mut bad = descriptor("BadFilter", FunctionalCategory::Filter);
        bad.output_roles.clear();
        assert!(bad.validate().is_err());
    }
}
