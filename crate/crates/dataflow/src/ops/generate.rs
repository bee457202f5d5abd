//! Generic LLM-driven generators: answer columns and variant row expansion.
//! Per-row failures degrade gracefully (null cell, missing variant) and are
//! counted; a configurable failure-rate threshold turns excessive failure
//! into a node error.

use crate::dataset::Dataset;
use crate::operator::{
    FunctionalCategory, InputRole, Modality, OperatorBehavior, OperatorDescriptor, OperatorError,
    OperatorInit, OutputRole, Registry, RegistryError, RunContext, Tier,
};
use crate::serving::{GenerationRequest, GenerationResponse};
use crate::template::{bind_template, PromptContext, PromptTemplate};
use crate::value::{FieldValue, ValueKind};

/// Checks that every required slot of a bound template can be filled by the
/// operator, so incompatible bindings surface at configuration time.
fn check_slots(
    init: &OperatorInit<'_>,
    template: &PromptTemplate,
    fillable: &[&str],
) -> Result<(), OperatorError> {
    for slot in &template.slots {
        if slot.required && !fillable.contains(&slot.name.as_str()) {
            return Err(init.config_error(format!(
                "template {:?} requires slot {:?} which {} cannot fill",
                template.identifier, slot.name, init.descriptor.name
            )));
        }
    }
    Ok(())
}

fn failure_rate_check(
    ctx: &RunContext<'_>,
    failures: usize,
    total: usize,
    threshold: f64,
) -> Result<(), OperatorError> {
    if total > 0 && failures as f64 / total as f64 > threshold {
        return Err(OperatorError::FailureRateExceeded {
            operator: ctx.operator_name().to_string(),
            row_failures: failures,
            rows: total,
            threshold,
        });
    }
    Ok(())
}

/// Writes one answer per row by prompting the bound template with the
/// question column. Failed generations leave a null cell.
pub struct AnswerGenerator {
    template: PromptTemplate,
    system_prompt: Option<String>,
    failure_rate_threshold: f64,
}

impl AnswerGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "AnswerGenerator".into(),
            category: FunctionalCategory::GenerateField,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_question".into(),
                kind: Some(ValueKind::Text),
                required: true,
            }],
            output_roles: vec![OutputRole { name: "output_answer".into(), kind: ValueKind::Text }],
            allowed_prompt_templates: vec!["qa_answer_gen".into()],
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<AnswerGenerator, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("qa_answer_gen");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        check_slots(init, &template, &["question"])?;
        Ok(AnswerGenerator {
            template,
            system_prompt: init.config_str("system_prompt").map(str::to_string),
            failure_rate_threshold: init.config_f64("failure_rate_threshold").unwrap_or(0.1),
        })
    }
}

impl OperatorBehavior for AnswerGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let question_col = ctx.column("input_question")?.to_string();
        let answer_col = ctx.column("output_answer")?.to_string();
        let dataset = ctx.read()?;

        let mut requests = Vec::new();
        let mut request_rows = Vec::new();
        let mut answers: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        let mut failures = 0usize;
        for (idx, row) in dataset.rows().iter().enumerate() {
            match row.get(&question_col).as_text() {
                Some(question) if !question.is_empty() => {
                    let prompt = self
                        .template
                        .build_prompt(&PromptContext::new().with("question", question))?;
                    let mut request = GenerationRequest::new(prompt)?;
                    if let Some(system) = &self.system_prompt {
                        request = request.with_system_prompt(system.clone());
                    }
                    requests.push(request);
                    request_rows.push(idx);
                }
                _ => failures += 1,
            }
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        for (row_idx, response) in request_rows.into_iter().zip(&responses) {
            match response_text(response) {
                Some(text) => answers[row_idx] = FieldValue::Text(text),
                None => failures += 1,
            }
        }

        failure_rate_check(ctx, failures, dataset.len(), self.failure_rate_threshold)?;
        ctx.record_failures(failures);
        ctx.write_new_column(&answer_col, answers)?;
        Ok(())
    }
}

fn response_text(response: &GenerationResponse) -> Option<String> {
    if response.is_ok() {
        response.text().map(str::to_string)
    } else {
        None
    }
}

/// Expands each row with up to `variants_per_row` generated variants. The
/// variant column replaces the source text in variant rows; every variant
/// carries the index of its original in `output_parent_index`. Originals
/// always survive, so generation failure can only reduce the expansion.
pub struct VariantRowGenerator {
    template: PromptTemplate,
    variants_per_row: usize,
    failure_rate_threshold: f64,
}

impl VariantRowGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "VariantRowGenerator".into(),
            category: FunctionalCategory::GenerateRows,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_source".into(),
                kind: Some(ValueKind::Text),
                required: true,
            }],
            output_roles: vec![
                OutputRole { name: "output_variant".into(), kind: ValueKind::Text },
                OutputRole { name: "output_parent_index".into(), kind: ValueKind::Number },
            ],
            allowed_prompt_templates: vec!["text_variant_gen".into()],
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<VariantRowGenerator, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("text_variant_gen");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        check_slots(init, &template, &["source", "variant_hint"])?;
        let variants_per_row = init.config_u64("variants_per_row").unwrap_or(1) as usize;
        if variants_per_row == 0 {
            return Err(init.config_error("variants_per_row must be at least 1"));
        }
        Ok(VariantRowGenerator {
            template,
            variants_per_row,
            // Missing variants degrade the expansion rather than the data,
            // so the default tolerates total failure.
            failure_rate_threshold: init.config_f64("failure_rate_threshold").unwrap_or(1.0),
        })
    }
}

impl OperatorBehavior for VariantRowGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let source_col = ctx.column("input_source")?.to_string();
        let variant_col = ctx.column("output_variant")?.to_string();
        let parent_col = ctx.column("output_parent_index")?.to_string();
        let dataset = ctx.read()?;
        let m = self.variants_per_row;

        let mut requests = Vec::new();
        let mut request_rows = Vec::new();
        for (idx, row) in dataset.rows().iter().enumerate() {
            let Some(source) = row.get(&source_col).as_text() else { continue };
            if source.is_empty() {
                continue;
            }
            for v in 0..m {
                let context = PromptContext::new()
                    .with("source", source)
                    .with("variant_hint", format!("Produce variant {} of {m}.", v + 1));
                requests.push(GenerationRequest::new(self.template.build_prompt(&context)?)?);
                request_rows.push(idx);
            }
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        let mut rows = dataset.rows().to_vec();
        let mut failures = 0usize;
        for (parent, response) in request_rows.iter().zip(&responses) {
            match response_text(response) {
                Some(text) => {
                    let mut row = dataset.row(*parent).clone();
                    row.set(variant_col.clone(), text);
                    row.set(parent_col.clone(), *parent as i64);
                    rows.push(row);
                }
                None => failures += 1,
            }
        }

        failure_rate_check(ctx, failures, requests.len(), self.failure_rate_threshold)?;
        ctx.record_failures(failures);
        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(rows)?;
        // Declared output columns exist even when no variant succeeded.
        for column in [&variant_col, &parent_col] {
            if !next.has_column(column) {
                next.set_column(column, vec![FieldValue::Null; next.len()])?;
            }
        }
        ctx.write_replace(next)?;
        Ok(())
    }
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistryError> {
    registry.register(AnswerGenerator::descriptor(), |init| {
        Ok(Box::new(AnswerGenerator::from_init(init)?))
    })?;
    registry.register(VariantRowGenerator::descriptor(), |init| {
        Ok(Box::new(VariantRowGenerator::from_init(init)?))
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Row;
    use crate::operator::{check_category_law, run_operator, KeyBinding};
    use crate::serving::{BackendConfig, MockScript, ServingHandle};
    use crate::storage::StorageSession;
    use crate::template::TemplateRegistry;
    use serde_json::json;

    fn questions(texts: &[&str]) -> StorageSession {
        let rows = texts.iter().map(|t| Row::new().with("question", *t)).collect();
        StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap())
    }

    fn answer_generator(config: serde_json::Value) -> AnswerGenerator {
        let templates = TemplateRegistry::with_builtins();
        let descriptor = AnswerGenerator::descriptor();
        let binding = KeyBinding::new()
            .with("input_question", "question")
            .with("output_answer", "answer");
        let init = OperatorInit { descriptor: &descriptor, config: &config, binding: &binding, templates: &templates };
        AnswerGenerator::from_init(&init).unwrap()
    }

    fn answer_binding() -> KeyBinding {
        KeyBinding::new().with("input_question", "question").with("output_answer", "answer")
    }

    #[test]
    fn answers_are_written_positionally() {
        let session = questions(&["q1", "q2"]);
        let serving = ServingHandle::new(BackendConfig::mock()).unwrap();
        let report = run_operator(
            &AnswerGenerator::descriptor(),
            &answer_generator(json!({})),
            &session,
            &answer_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap();
        check_category_law(&report, FunctionalCategory::GenerateField).unwrap();
        let ds = session.read(None).unwrap();
        assert_eq!(ds.len(), 2);
        let a1 = ds.cell(0, "answer").as_text().unwrap().to_string();
        let a2 = ds.cell(1, "answer").as_text().unwrap().to_string();
        assert!(a1.starts_with("MOCK(") && a2.starts_with("MOCK("));
        assert_ne!(a1, a2);
    }

    #[test]
    fn empty_dataset_issues_no_requests_but_adds_the_column() {
        let session = StorageSession::in_memory();
        let serving = ServingHandle::new(BackendConfig::mock()).unwrap();
        let report = run_operator(
            &AnswerGenerator::descriptor(),
            &answer_generator(json!({})),
            &session,
            &answer_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap();
        check_category_law(&report, FunctionalCategory::GenerateField).unwrap();
        assert_eq!(report.rows_out, 0);
        assert!(session.read(None).unwrap().has_column("answer"));
    }

    #[test]
    fn scripted_failure_leaves_null_and_counts() {
        let session = questions(&["q1", "q2", "q3"]);
        let mut config = BackendConfig::mock();
        config.retry.max_attempts = 1;
        let script = MockScript::new().fail_prefix("Answer the following question accurately and concisely.\n\nQuestion: q2");
        let serving = ServingHandle::mock_scripted(config, script).unwrap();
        let report = run_operator(
            &AnswerGenerator::descriptor(),
            &answer_generator(json!({"failure_rate_threshold": 1.0})),
            &session,
            &answer_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap();
        assert_eq!(report.failures, 1);
        let ds = session.read(None).unwrap();
        assert!(ds.cell(1, "answer").is_null());
        assert!(!ds.cell(0, "answer").is_null());
    }

    #[test]
    fn default_threshold_errors_on_heavy_failure() {
        let session = questions(&["q1", "q2"]);
        let mut config = BackendConfig::mock();
        config.retry.max_attempts = 1;
        let serving =
            ServingHandle::mock_scripted(config, MockScript::new().fail_prefix("")).unwrap();
        let err = run_operator(
            &AnswerGenerator::descriptor(),
            &answer_generator(json!({})),
            &session,
            &answer_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap_err();
        assert!(matches!(err, OperatorError::FailureRateExceeded { .. }));
    }

    #[test]
    fn mock_generation_is_deterministic_across_runs() {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let session = questions(&["alpha", "beta"]);
            let serving = ServingHandle::new(BackendConfig::mock()).unwrap();
            run_operator(
                &AnswerGenerator::descriptor(),
                &answer_generator(json!({})),
                &session,
                &answer_binding(),
                Some(&serving),
                [7; 32],
            )
            .unwrap();
            outputs.push(session.read(None).unwrap().canonical_jsonl());
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    fn variant_generator(config: serde_json::Value) -> VariantRowGenerator {
        let templates = TemplateRegistry::with_builtins();
        let descriptor = VariantRowGenerator::descriptor();
        let binding = variant_binding();
        let init = OperatorInit { descriptor: &descriptor, config: &config, binding: &binding, templates: &templates };
        VariantRowGenerator::from_init(&init).unwrap()
    }

    fn variant_binding() -> KeyBinding {
        KeyBinding::new()
            .with("input_source", "text")
            .with("output_variant", "text")
            .with("output_parent_index", "parent_index")
    }

    fn texts(n: usize) -> StorageSession {
        let rows = (0..n).map(|i| Row::new().with("text", format!("sample {i}"))).collect();
        StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap())
    }

    #[test]
    fn all_successes_triple_the_rows() {
        let session = texts(10);
        let serving = ServingHandle::new(BackendConfig::mock()).unwrap();
        let report = run_operator(
            &VariantRowGenerator::descriptor(),
            &variant_generator(json!({"variants_per_row": 2})),
            &session,
            &variant_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap();
        check_category_law(&report, FunctionalCategory::GenerateRows).unwrap();
        assert_eq!(report.rows_out, 30);
    }

    #[test]
    fn total_failure_keeps_only_originals() {
        let session = texts(10);
        let mut config = BackendConfig::mock();
        config.retry.max_attempts = 1;
        let serving =
            ServingHandle::mock_scripted(config, MockScript::new().fail_prefix("")).unwrap();
        let report = run_operator(
            &VariantRowGenerator::descriptor(),
            &variant_generator(json!({"variants_per_row": 1})),
            &session,
            &variant_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap();
        assert_eq!(report.rows_out, 10);
        assert_eq!(report.failures, 10);
        // The declared output column exists even with zero variants.
        assert!(session.read(None).unwrap().has_column("parent_index"));
    }

    #[test]
    fn parent_index_names_an_original_row() {
        let session = texts(5);
        let serving = ServingHandle::new(BackendConfig::mock()).unwrap();
        run_operator(
            &VariantRowGenerator::descriptor(),
            &variant_generator(json!({"variants_per_row": 2})),
            &session,
            &variant_binding(),
            Some(&serving),
            [0; 32],
        )
        .unwrap();
        let ds = session.read(None).unwrap();
        assert_eq!(ds.len(), 15);
        for row in ds.rows() {
            match row.get("parent_index") {
                FieldValue::Null => {}
                FieldValue::Number(n) => {
                    let parent = n.as_u64().expect("non-negative index") as usize;
                    assert!(parent < 5);
                }
                other => panic!("unexpected parent_index {other:?}"),
            }
        }
    }
}
