//! Evaluators: per-sample metadata columns and dataset-level metrics.

use crate::operator::{
    FunctionalCategory, InputRole, Modality, OperatorBehavior, OperatorDescriptor, OperatorError,
    OutputRole, Registry, RegistryError, RunContext, Tier,
};
use crate::value::{FieldValue, ValueKind};

/// Attaches the Unicode-scalar-value count of the bound text column as a
/// new number column. Null cells evaluate to null.
pub struct LengthSampleEvaluator;

impl LengthSampleEvaluator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "LengthSampleEvaluator".into(),
            category: FunctionalCategory::EvaluateSample,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_text".into(),
                kind: Some(ValueKind::Text),
                required: true,
            }],
            output_roles: vec![OutputRole { name: "output_length".into(), kind: ValueKind::Number }],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }
}

impl OperatorBehavior for LengthSampleEvaluator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let input = ctx.column("input_text")?.to_string();
        let output = ctx.column("output_length")?.to_string();
        let dataset = ctx.read()?;
        let mut values = Vec::with_capacity(dataset.len());
        for (idx, row) in dataset.rows().iter().enumerate() {
            match row.get(&input) {
                FieldValue::Text(s) => values.push(FieldValue::int(s.chars().count() as i64)),
                FieldValue::Null => values.push(FieldValue::Null),
                other => {
                    return Err(ctx.behavior_error(format!(
                        "row {idx}: column {input:?} holds {} values, expected text",
                        other.kind()
                    )))
                }
            }
        }
        // No overwrite: the output column must be new.
        ctx.write_new_column(&output, values)?;
        Ok(())
    }
}

/// Dataset-level length statistics over a text column. Writes no columns;
/// the metrics go to the run manifest.
pub struct LengthStatsDatasetEvaluator;

impl LengthStatsDatasetEvaluator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "LengthStatsDatasetEvaluator".into(),
            category: FunctionalCategory::EvaluateDataset,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_text".into(),
                kind: Some(ValueKind::Text),
                required: true,
            }],
            output_roles: vec![],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }
}

impl OperatorBehavior for LengthStatsDatasetEvaluator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let input = ctx.column("input_text")?.to_string();
        let dataset = ctx.read()?;
        let lengths: Vec<usize> = dataset
            .rows()
            .iter()
            .filter_map(|row| row.get(&input).as_text().map(|s| s.chars().count()))
            .collect();
        ctx.record_metric("rows", dataset.len() as f64);
        ctx.record_metric("text_cells", lengths.len() as f64);
        if !lengths.is_empty() {
            let sum: usize = lengths.iter().sum();
            ctx.record_metric("mean_length", sum as f64 / lengths.len() as f64);
            ctx.record_metric("min_length", *lengths.iter().min().expect("non-empty") as f64);
            ctx.record_metric("max_length", *lengths.iter().max().expect("non-empty") as f64);
        }
        Ok(())
    }
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistryError> {
    registry.register(LengthSampleEvaluator::descriptor(), |_| Ok(Box::new(LengthSampleEvaluator)))?;
    registry.register(LengthStatsDatasetEvaluator::descriptor(), |_| {
        Ok(Box::new(LengthStatsDatasetEvaluator))
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Row};
    use crate::operator::{check_category_law, run_operator, KeyBinding};
    use crate::storage::StorageSession;

    fn length_of(texts: &[&str]) -> Vec<FieldValue> {
        let rows = texts.iter().map(|t| Row::new().with("text", *t)).collect();
        let session = StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap());
        let binding = KeyBinding::new().with("input_text", "text").with("output_length", "length");
        let report = run_operator(
            &LengthSampleEvaluator::descriptor(),
            &LengthSampleEvaluator,
            &session,
            &binding,
            None,
            [0; 32],
        )
        .unwrap();
        check_category_law(&report, FunctionalCategory::EvaluateSample).unwrap();
        session.read(None).unwrap().column_values("length").unwrap()
    }

    #[test]
    fn scalar_value_counting() {
        assert_eq!(length_of(&["abc"]), vec![FieldValue::int(3)]);
        assert_eq!(length_of(&[""]), vec![FieldValue::int(0)]);
        // Five scalar values even though the byte length is larger.
        assert_eq!(length_of(&["héllo"]), vec![FieldValue::int(5)]);
    }

    #[test]
    fn existing_output_column_is_rejected() {
        let rows = vec![Row::new().with("text", "x").with("length", 99i64)];
        let session = StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap());
        let binding = KeyBinding::new().with("input_text", "text").with("output_length", "length");
        let err = run_operator(
            &LengthSampleEvaluator::descriptor(),
            &LengthSampleEvaluator,
            &session,
            &binding,
            None,
            [0; 32],
        )
        .unwrap_err();
        assert!(err.to_string().contains("already exists"), "{err}");
    }

    #[test]
    fn dataset_stats_emit_metrics_without_columns() {
        let rows = vec![Row::new().with("text", "ab"), Row::new().with("text", "abcd")];
        let session = StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap());
        let binding = KeyBinding::new().with("input_text", "text");
        let report = run_operator(
            &LengthStatsDatasetEvaluator::descriptor(),
            &LengthStatsDatasetEvaluator,
            &session,
            &binding,
            None,
            [0; 32],
        )
        .unwrap();
        check_category_law(&report, FunctionalCategory::EvaluateDataset).unwrap();
        assert!(report.columns_added.is_empty());
        assert_eq!(report.dataset_metrics["rows"], 2.0);
        assert_eq!(report.dataset_metrics["mean_length"], 3.0);
        assert_eq!(report.dataset_metrics["max_length"], 4.0);
    }
}
