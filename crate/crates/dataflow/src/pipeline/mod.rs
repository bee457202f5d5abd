//! Pipeline composition: definitions, compile-time DAG construction with
//! all-errors-at-once key-level validation, deferred execution, and
//! checkpoint/resume.
//!
//! A definition is an ordered sequence of operator invocations. Compilation
//! resolves every column reference against a versioned producer timeline:
//! a node that reads and writes the same column (or declares `overwrite` in
//! its configuration) creates a new version of it; consumers depend on the
//! latest version written before them, or on a later producer when the
//! definition is declared out of order — the plan's topological order, not
//! the declaration order, is what executes. Nothing runs at compile time:
//! operator configurations are frozen into the plan and instantiated again
//! node by node during `forward`.

mod exec;
mod plan;
mod report;

pub use exec::{
    forward, resume, write_manifest, ExecutionState, ForwardOptions, LawPolicy, PipelineRunError,
    RunFailure,
};
pub use plan::{plan_digest, topological_order, ColumnInfo, ColumnProducer, CompiledPlan, PlanEdge, PlanNode};
pub use report::{CompileReport, Diagnostic, DiagnosticCode, Severity};

use crate::dataset::Dataset;
use crate::operator::{KeyBinding, OperatorInit, Registry};
use crate::serving::{BackendConfig, MockScript};
use crate::storage::StorageFormat;
use crate::template::TemplateRegistry;
use crate::value::ValueKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub location: String,
    pub format: StorageFormat,
}

/// Serving section of a pipeline file: a backend configuration plus an
/// optional mock script for deterministic runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingSpec {
    #[serde(flatten)]
    pub config: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<MockScript>,
}

fn empty_config() -> Value {
    Value::Object(serde_json::Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDef {
    pub name: String,
    #[serde(default = "empty_config")]
    pub config: Value,
    #[serde(default)]
    pub bindings: KeyBinding,
}

impl NodeDef {
    pub fn new(name: impl Into<String>, config: Value, bindings: KeyBinding) -> NodeDef {
        NodeDef { name: name.into(), config, bindings }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDef {
    #[serde(default)]
    pub initial_columns: Vec<ColumnDecl>,
    pub operators: Vec<NodeDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serving: Option<ServingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageSpec>,
}

impl PipelineDef {
    pub fn from_json(text: &str) -> Result<PipelineDef, CompileError> {
        serde_json::from_str(text).map_err(|e| CompileError::Invalid(format!("invalid pipeline definition: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<PipelineDef, CompileError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CompileError::Invalid(format!("cannot read pipeline file {}: {e}", path.display()))
        })?;
        PipelineDef::from_json(&text)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("serializable pipeline definition")
    }
}

/// Declares initial column kinds by sampling the first row of a dataset.
/// Columns whose first cell is null stay unknown (kind `null`), which is
/// compatible with any consumer.
pub fn sample_initial_columns(dataset: &Dataset) -> Vec<ColumnDecl> {
    dataset
        .columns()
        .iter()
        .map(|name| ColumnDecl {
            name: name.clone(),
            kind: dataset
                .rows()
                .first()
                .map(|row| row.get(name).kind())
                .unwrap_or(ValueKind::Null),
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    /// Key- or dependency-level diagnostics; the definition is structurally
    /// readable but not executable.
    #[error("pipeline failed to compile with {} diagnostic(s):\n{}", .0.len(), .0)]
    Report(CompileReport),
    /// The definition itself is unusable (unreadable file, bad JSON, or a
    /// configuration the operator factory rejects).
    #[error("{0}")]
    Invalid(String),
}

struct NodeFacts<'a> {
    modality: Option<crate::operator::Modality>,
    /// Bound inputs: role, column, expected kind.
    inputs: Vec<(&'a str, &'a str, Option<ValueKind>)>,
    /// Bound outputs: role, column, produced kind.
    outputs: Vec<(&'a str, &'a str, ValueKind)>,
    overwrite: bool,
}

#[derive(Clone, Copy)]
struct WriteEvent {
    node: usize,
    kind: ValueKind,
}

/// Static analysis of a pipeline definition. Returns the deferred execution
/// plan, or a report carrying every diagnostic found — never just the first.
/// No operator executes and no storage or serving traffic occurs.
pub fn compile(
    def: &PipelineDef,
    registry: &Registry,
    templates: &TemplateRegistry,
) -> Result<CompiledPlan, CompileError> {
    if def.operators.is_empty() {
        return Err(CompileError::Invalid("pipeline has no operators".into()));
    }

    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut facts: Vec<NodeFacts> = Vec::with_capacity(def.operators.len());

    for (index, node) in def.operators.iter().enumerate() {
        match registry.get(&node.name) {
            Err(_) => {
                diagnostics.push(Diagnostic::error(
                    DiagnosticCode::UnknownOperator,
                    Some(index),
                    Some(node.name.clone()),
                    format!("operator {:?} is not registered", node.name),
                ));
                facts.push(NodeFacts { modality: None, inputs: vec![], outputs: vec![], overwrite: false });
            }
            Ok(entry) => {
                let descriptor = &entry.descriptor;
                if let Err(e) = node.bindings.validate_against(descriptor) {
                    diagnostics.push(Diagnostic::error(
                        DiagnosticCode::BindingIncomplete,
                        Some(index),
                        None,
                        e.to_string(),
                    ));
                }
                // Whatever is bound still participates in the dataflow, so
                // one incomplete binding does not cascade into spurious
                // missing-column diagnostics elsewhere.
                let inputs = descriptor
                    .input_roles
                    .iter()
                    .filter_map(|role| {
                        node.bindings
                            .column(&role.name)
                            .filter(|c| !c.is_empty())
                            .map(|column| (role.name.as_str(), column, role.kind))
                    })
                    .collect();
                let outputs = descriptor
                    .output_roles
                    .iter()
                    .filter_map(|role| {
                        node.bindings
                            .column(&role.name)
                            .filter(|c| !c.is_empty())
                            .map(|column| (role.name.as_str(), column, role.kind))
                    })
                    .collect();
                let overwrite = node.config.get("overwrite").and_then(Value::as_bool).unwrap_or(false);
                facts.push(NodeFacts {
                    modality: Some(descriptor.modality),
                    inputs,
                    outputs,
                    overwrite,
                });
            }
        }
    }

    let initial: BTreeMap<&str, ValueKind> =
        def.initial_columns.iter().map(|c| (c.name.as_str(), c.kind)).collect();

    // Versioned write timeline per column, in declaration order. A write is
    // an overwrite (a new version of an existing column) when the node also
    // reads the column or declares overwrite intent; otherwise it claims to
    // be the column's fresh producer.
    let mut writes: BTreeMap<&str, Vec<WriteEvent>> = BTreeMap::new();
    let mut fresh_writes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (index, fact) in facts.iter().enumerate() {
        let mut written: BTreeSet<&str> = BTreeSet::new();
        for (_, column, kind) in &fact.outputs {
            if !written.insert(column) {
                continue; // duplicate output columns already diagnosed
            }
            writes.entry(column).or_default().push(WriteEvent { node: index, kind: *kind });
            let reads_it = fact.inputs.iter().any(|(_, c, _)| c == column);
            if !reads_it && !fact.overwrite {
                fresh_writes.entry(column).or_default().push(index);
            }
        }
    }

    for (column, producers) in &fresh_writes {
        let initial_produces = initial.contains_key(column);
        let skip = if initial_produces { 0 } else { 1 };
        for &node in producers.iter().skip(skip) {
            let first = if initial_produces {
                "the initial columns".to_string()
            } else {
                format!("node {}", producers[0])
            };
            diagnostics.push(Diagnostic::error(
                DiagnosticCode::DuplicateProducer,
                Some(node),
                Some((*column).to_string()),
                format!("column {column:?} is already produced by {first}; declare overwrite intent to version it"),
            ));
        }
    }

    // Resolve every bound input to the version it consumes.
    let mut edge_set: BTreeSet<(usize, usize, String)> = BTreeSet::new();
    for (index, fact) in facts.iter().enumerate() {
        for (role, column, expected) in &fact.inputs {
            let events = writes.get(column);
            let before = events.and_then(|evs| evs.iter().rev().find(|e| e.node < index));
            let resolved_kind = if let Some(event) = before {
                edge_set.insert((event.node, index, (*column).to_string()));
                Some(event.kind)
            } else if let Some(kind) = initial.get(column) {
                Some(*kind)
            } else if let Some(event) = events.and_then(|evs| evs.iter().find(|e| e.node > index)) {
                // Declared out of order; the topological order will run the
                // producer first (or report a cycle).
                edge_set.insert((event.node, index, (*column).to_string()));
                Some(event.kind)
            } else {
                diagnostics.push(Diagnostic::error(
                    DiagnosticCode::MissingColumn,
                    Some(index),
                    Some((*column).to_string()),
                    format!(
                        "input role {role:?} is bound to column {column:?}, which no node produces and the initial columns do not declare"
                    ),
                ));
                None
            };
            if let (Some(expected), Some(got)) = (expected, resolved_kind) {
                if got != *expected && got != ValueKind::Null {
                    diagnostics.push(Diagnostic::error(
                        DiagnosticCode::KindMismatch,
                        Some(index),
                        Some((*column).to_string()),
                        format!("input role {role:?} expects {expected} but column {column:?} holds {got}"),
                    ));
                }
            }
        }
    }

    // Version-chain edges keep successive writers of one column ordered
    // even when the later writer does not read it.
    for events in writes.values() {
        for pair in events.windows(2) {
            if pair[0].node != pair[1].node {
                edge_set.insert((pair[0].node, pair[1].node, String::new()));
            }
        }
    }

    let edges: Vec<PlanEdge> = edge_set
        .iter()
        .filter(|(_, _, column)| !column.is_empty())
        .map(|(from, to, column)| PlanEdge { from: *from, to: *to, column: column.clone() })
        .collect();

    // Modality transitions must be explicit; with no converters shipped,
    // adjacent dependent nodes must share a modality.
    let mut pairs_seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (from, to, _) in &edge_set {
        if !pairs_seen.insert((*from, *to)) {
            continue;
        }
        if let (Some(a), Some(b)) = (facts[*from].modality, facts[*to].modality) {
            if a != b {
                diagnostics.push(Diagnostic::error(
                    DiagnosticCode::ModalityMismatch,
                    Some(*to),
                    None,
                    format!(
                        "node {from} ({}) feeds node {to} ({}) across modalities",
                        a.as_str(),
                        b.as_str()
                    ),
                ));
            }
        }
    }

    let all_edges: Vec<PlanEdge> = edge_set
        .iter()
        .map(|(from, to, column)| PlanEdge { from: *from, to: *to, column: column.clone() })
        .collect();
    let order = match topological_order(def.operators.len(), &all_edges) {
        Ok(order) => order,
        Err(remaining) => {
            report_cycles(&remaining, &all_edges, &mut diagnostics);
            Vec::new()
        }
    };

    if !diagnostics.is_empty() {
        return Err(CompileError::Report(CompileReport { diagnostics }));
    }

    // Freeze configurations, validating each through its factory. This is
    // pure construction: the deferred plan re-instantiates behaviors at
    // forward time.
    let mut nodes = Vec::with_capacity(def.operators.len());
    for (index, node) in def.operators.iter().enumerate() {
        let entry = registry.get(&node.name).expect("validated above");
        let init = OperatorInit {
            descriptor: &entry.descriptor,
            config: &node.config,
            binding: &node.bindings,
            templates,
        };
        entry
            .configure(&init)
            .map_err(|e| CompileError::Invalid(format!("node {index} ({}): {e}", node.name)))?;
        nodes.push(PlanNode {
            index,
            operator: node.name.clone(),
            config: node.config.clone(),
            binding: node.bindings.clone(),
        });
    }

    let mut kind_table: BTreeMap<String, ColumnInfo> = def
        .initial_columns
        .iter()
        .map(|c| (c.name.clone(), ColumnInfo { kind: c.kind, producer: ColumnProducer::Initial }))
        .collect();
    for (column, events) in &writes {
        if let Some(last) = events.last() {
            kind_table.insert(
                column.to_string(),
                ColumnInfo { kind: last.kind, producer: ColumnProducer::Node(last.node) },
            );
        }
    }

    let digest = plan_digest(&nodes);
    Ok(CompiledPlan { nodes, edges, order, kind_table, digest })
}

/// Extracts the cycles from the unorderable remainder of Kahn's algorithm:
/// within the remainder every node has a predecessor, so walking
/// predecessors from any node must revisit one, and the revisited segment
/// is a cycle. Disjoint cycles get separate diagnostics.
fn report_cycles(remaining: &[usize], edges: &[PlanEdge], diagnostics: &mut Vec<Diagnostic>) {
    let remaining_set: BTreeSet<usize> = remaining.iter().copied().collect();
    let mut predecessors: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for edge in edges {
        if remaining_set.contains(&edge.from) && remaining_set.contains(&edge.to) {
            predecessors.entry(edge.to).or_default().insert(edge.from);
        }
    }
    let mut visited: BTreeSet<usize> = BTreeSet::new();
    for &start in remaining {
        if visited.contains(&start) {
            continue;
        }
        let mut path: Vec<usize> = vec![start];
        loop {
            let current = *path.last().expect("non-empty path");
            let Some(&pred) = predecessors.get(&current).and_then(|p| p.iter().next()) else {
                break;
            };
            if let Some(pos) = path.iter().position(|&n| n == pred) {
                let mut cycle: Vec<usize> = path[pos..].to_vec();
                cycle.sort_unstable();
                diagnostics.push(Diagnostic::error(
                    DiagnosticCode::Cycle,
                    Some(cycle[0]),
                    None,
                    format!("nodes {cycle:?} form a dependency cycle"),
                ));
                visited.extend(path.iter().copied());
                break;
            }
            if visited.contains(&pred) {
                visited.extend(path.iter().copied());
                break;
            }
            path.push(pred);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;
    use serde_json::json;

    fn setup() -> (Registry, TemplateRegistry) {
        let mut registry = Registry::new();
        ops::register_builtins(&mut registry).unwrap();
        (registry, TemplateRegistry::with_builtins())
    }

    fn refiner_node(column: &str) -> NodeDef {
        NodeDef::new(
            "UrlRefiner",
            json!({}),
            KeyBinding::new().with("input_text", column).with("output_text", column),
        )
    }

    fn text_columns(names: &[&str]) -> Vec<ColumnDecl> {
        names.iter().map(|n| ColumnDecl { name: n.to_string(), kind: ValueKind::Text }).collect()
    }

    #[test]
    fn single_dependency_creates_an_edge() {
        let (registry, templates) = setup();
        let def = PipelineDef {
            initial_columns: text_columns(&["text"]),
            operators: vec![
                NodeDef::new(
                    "LengthSampleEvaluator",
                    json!({}),
                    KeyBinding::new().with("input_text", "text").with("output_length", "len"),
                ),
                NodeDef::new(
                    "ScoreThresholdFilter",
                    json!({"minimum": 3}),
                    KeyBinding::new().with("input_score", "len").with("output_score", "len"),
                ),
            ],
            serving: None,
            storage: None,
        };
        let plan = compile(&def, &registry, &templates).unwrap();
        assert_eq!(plan.len(), 2);
        assert!(plan.edges.iter().any(|e| e.from == 0 && e.to == 1 && e.column == "len"));
        assert_eq!(plan.order, vec![0, 1]);
        assert_eq!(plan.kind_table["len"].kind, ValueKind::Number);
    }

    #[test]
    fn missing_column_is_reported_with_the_name() {
        let (registry, templates) = setup();
        let def = PipelineDef {
            initial_columns: text_columns(&["text"]),
            operators: vec![NodeDef::new(
                "ScoreThresholdFilter",
                json!({"minimum": 0}),
                KeyBinding::new().with("input_score", "z").with("output_score", "z"),
            )],
            serving: None,
            storage: None,
        };
        let err = compile(&def, &registry, &templates).unwrap_err();
        let CompileError::Report(report) = err else { panic!("expected report") };
        assert_eq!(report.codes(), vec![DiagnosticCode::MissingColumn]);
        assert_eq!(report.diagnostics[0].subject.as_deref(), Some("z"));
        assert_eq!(report.diagnostics[0].node, Some(0));
    }

    #[test]
    fn three_planted_faults_yield_exactly_three_codes() {
        let (registry, templates) = setup();
        let def = PipelineDef {
            initial_columns: text_columns(&["text", "other"]),
            operators: vec![
                // Fault 1: unknown operator.
                NodeDef::new("NoSuchOperator", json!({}), KeyBinding::new()),
                // Fault 2: consumes a column nobody produces.
                NodeDef::new(
                    "ScoreThresholdFilter",
                    json!({"minimum": 0}),
                    KeyBinding::new().with("input_score", "ghost").with("output_score", "ghost"),
                ),
                // Fault 3: blind re-production of the initial "text" column.
                NodeDef::new(
                    "LengthSampleEvaluator",
                    json!({}),
                    KeyBinding::new().with("input_text", "other").with("output_length", "text"),
                ),
            ],
            serving: None,
            storage: None,
        };
        let err = compile(&def, &registry, &templates).unwrap_err();
        let CompileError::Report(report) = err else { panic!("expected report") };
        assert_eq!(
            report.codes(),
            vec![
                DiagnosticCode::MissingColumn,
                DiagnosticCode::DuplicateProducer,
                DiagnosticCode::UnknownOperator,
            ]
        );
    }

    #[test]
    fn kind_mismatch_between_producer_and_consumer() {
        let (registry, templates) = setup();
        // LengthSampleEvaluator produces a number; UrlRefiner wants text.
        let def = PipelineDef {
            initial_columns: text_columns(&["text"]),
            operators: vec![
                NodeDef::new(
                    "LengthSampleEvaluator",
                    json!({}),
                    KeyBinding::new().with("input_text", "text").with("output_length", "len"),
                ),
                NodeDef::new(
                    "UrlRefiner",
                    json!({}),
                    KeyBinding::new().with("input_text", "len").with("output_text", "len"),
                ),
            ],
            serving: None,
            storage: None,
        };
        let err = compile(&def, &registry, &templates).unwrap_err();
        let CompileError::Report(report) = err else { panic!("expected report") };
        assert_eq!(report.codes(), vec![DiagnosticCode::KindMismatch]);
    }

    #[test]
    fn mutual_producers_form_a_cycle() {
        let (registry, templates) = setup();
        // Node 0 reads a, writes b; node 1 reads b, writes a. Both columns
        // have producers, so the only fault is the cycle itself.
        let def = PipelineDef {
            initial_columns: vec![],
            operators: vec![
                NodeDef::new(
                    "UrlRefiner",
                    json!({"overwrite": true}),
                    KeyBinding::new().with("input_text", "a").with("output_text", "b"),
                ),
                NodeDef::new(
                    "UrlRefiner",
                    json!({"overwrite": true}),
                    KeyBinding::new().with("input_text", "b").with("output_text", "a"),
                ),
            ],
            serving: None,
            storage: None,
        };
        let err = compile(&def, &registry, &templates).unwrap_err();
        let CompileError::Report(report) = err else { panic!("expected report") };
        assert_eq!(report.codes(), vec![DiagnosticCode::Cycle]);
    }

    #[test]
    fn in_place_rewrite_is_not_a_duplicate_producer() {
        let (registry, templates) = setup();
        let def = PipelineDef {
            initial_columns: text_columns(&["text"]),
            operators: vec![refiner_node("text"), refiner_node("text")],
            serving: None,
            storage: None,
        };
        let plan = compile(&def, &registry, &templates).unwrap();
        // The second refiner consumes the first one's version.
        assert!(plan.edges.iter().any(|e| e.from == 0 && e.to == 1 && e.column == "text"));
        assert_eq!(plan.order, vec![0, 1]);
    }

    #[test]
    fn out_of_order_declaration_compiles_and_reorders() {
        let (registry, templates) = setup();
        let def = PipelineDef {
            initial_columns: text_columns(&["question"]),
            operators: vec![
                // Declared first but consumes the answer produced below.
                NodeDef::new(
                    "LengthSampleEvaluator",
                    json!({}),
                    KeyBinding::new().with("input_text", "answer").with("output_length", "len"),
                ),
                NodeDef::new(
                    "AnswerGenerator",
                    json!({}),
                    KeyBinding::new().with("input_question", "question").with("output_answer", "answer"),
                ),
            ],
            serving: None,
            storage: None,
        };
        let plan = compile(&def, &registry, &templates).unwrap();
        assert_eq!(plan.order, vec![1, 0]);
    }

    #[test]
    fn invalid_config_is_not_a_diagnostic() {
        let (registry, templates) = setup();
        let def = PipelineDef {
            initial_columns: text_columns(&["text"]),
            operators: vec![NodeDef::new(
                "ScoreThresholdFilter",
                json!({}), // missing required "minimum"
                KeyBinding::new().with("input_score", "text").with("output_score", "text"),
            )],
            serving: None,
            storage: None,
        };
        // The kind mismatch (text into a number role) is a diagnostic; fix
        // that and the config failure surfaces as a hard error instead.
        let err = compile(&def, &registry, &templates).unwrap_err();
        assert!(matches!(err, CompileError::Report(_)));

        let def = PipelineDef {
            initial_columns: vec![ColumnDecl { name: "score".into(), kind: ValueKind::Number }],
            operators: vec![NodeDef::new(
                "ScoreThresholdFilter",
                json!({}),
                KeyBinding::new().with("input_score", "score").with("output_score", "score"),
            )],
            serving: None,
            storage: None,
        };
        let err = compile(&def, &registry, &templates).unwrap_err();
        assert!(matches!(err, CompileError::Invalid(_)));
    }

    #[test]
    fn pipeline_def_round_trips_through_json() {
        let def = PipelineDef {
            initial_columns: text_columns(&["text"]),
            operators: vec![refiner_node("text")],
            serving: Some(ServingSpec { config: BackendConfig::mock(), script: None }),
            storage: Some(StorageSpec { location: "data.jsonl".into(), format: StorageFormat::Jsonl }),
        };
        let text = serde_json::to_string_pretty(&def.to_json()).unwrap();
        let back = PipelineDef::from_json(&text).unwrap();
        assert_eq!(back, def);
    }
}
