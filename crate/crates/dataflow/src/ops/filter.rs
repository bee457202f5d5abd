//! Row filters: contraction only, preserving survivor order, with any
//! persisted evaluation column declared up front.

use crate::dataset::Dataset;
use crate::operator::{
    FunctionalCategory, InputRole, Modality, OperatorBehavior, OperatorDescriptor, OperatorError,
    OperatorInit, OutputRole, Registry, RegistryError, RunContext, Tier,
};
use crate::value::{canonical_json, FieldValue, ValueKind};
use std::collections::HashSet;

/// Keeps the first occurrence (in row order) of each distinct key tuple.
/// Up to three key columns; identity is the canonical JSON of the tuple.
pub struct ExactDedupFilter;

impl ExactDedupFilter {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "ExactDedupFilter".into(),
            category: FunctionalCategory::Filter,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![
                InputRole { name: "input_key".into(), kind: None, required: true },
                InputRole { name: "input_key2".into(), kind: None, required: false },
                InputRole { name: "input_key3".into(), kind: None, required: false },
            ],
            output_roles: vec![OutputRole { name: "output_key".into(), kind: ValueKind::Text }],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }
}

impl OperatorBehavior for ExactDedupFilter {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let mut keys = vec![ctx.column("input_key")?.to_string()];
        for role in ["input_key2", "input_key3"] {
            if let Some(column) = ctx.column_opt(role) {
                keys.push(column.to_string());
            }
        }
        let dataset = ctx.read()?;
        if !dataset.is_empty() {
            for key in &keys {
                if !dataset.has_column(key) {
                    return Err(OperatorError::MissingInputColumn {
                        operator: ctx.operator_name().to_string(),
                        column: key.clone(),
                        available: dataset.columns().to_vec(),
                    });
                }
            }
        }
        let mut seen = HashSet::new();
        let mut survivors = Vec::new();
        for row in dataset.rows() {
            let tuple: Vec<serde_json::Value> = keys.iter().map(|k| row.get(k).to_json()).collect();
            let identity = canonical_json(&serde_json::Value::Array(tuple));
            if seen.insert(identity) {
                survivors.push(row.clone());
            }
        }
        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(survivors)?;
        ctx.write_replace(next)?;
        Ok(())
    }
}

/// Numeric band filter over a score column.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreThresholdConfig {
    pub minimum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximum: Option<f64>,
    #[serde(default = "default_keep_on_equal")]
    pub keep_on_equal: bool,
}

fn default_keep_on_equal() -> bool {
    true
}

impl ScoreThresholdConfig {
    fn validate(&self) -> Result<(), String> {
        if let Some(max) = self.maximum {
            if max < self.minimum {
                return Err(format!("maximum {max} is below minimum {}", self.minimum));
            }
        }
        Ok(())
    }

    fn keeps(&self, score: f64) -> bool {
        let lower = if self.keep_on_equal { score >= self.minimum } else { score > self.minimum };
        let upper = match self.maximum {
            None => true,
            Some(max) if self.keep_on_equal => score <= max,
            Some(max) => score < max,
        };
        lower && upper
    }
}

/// Keeps rows whose score lies inside the configured band.
pub struct ScoreThresholdFilter {
    config: ScoreThresholdConfig,
}

impl ScoreThresholdFilter {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "ScoreThresholdFilter".into(),
            category: FunctionalCategory::Filter,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_score".into(),
                kind: Some(ValueKind::Number),
                required: true,
            }],
            output_roles: vec![OutputRole { name: "output_score".into(), kind: ValueKind::Number }],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }

    pub fn new(config: ScoreThresholdConfig) -> ScoreThresholdFilter {
        ScoreThresholdFilter { config }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<ScoreThresholdFilter, OperatorError> {
        let config: ScoreThresholdConfig = serde_json::from_value(init.config.clone())
            .map_err(|e| init.config_error(e.to_string()))?;
        config.validate().map_err(|e| init.config_error(e))?;
        Ok(ScoreThresholdFilter::new(config))
    }
}

impl OperatorBehavior for ScoreThresholdFilter {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let column = ctx.column("input_score")?.to_string();
        let dataset = ctx.read()?;
        let mut survivors = Vec::new();
        for (idx, row) in dataset.rows().iter().enumerate() {
            let score = match row.get(&column) {
                FieldValue::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                other => {
                    return Err(ctx.behavior_error(format!(
                        "row {idx}: score column {column:?} holds {} instead of a number",
                        other.kind()
                    )))
                }
            };
            if self.config.keeps(score) {
                survivors.push(row.clone());
            }
        }
        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(survivors)?;
        ctx.write_replace(next)?;
        Ok(())
    }
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistryError> {
    registry.register(ExactDedupFilter::descriptor(), |_| Ok(Box::new(ExactDedupFilter)))?;
    registry.register(ScoreThresholdFilter::descriptor(), |init| {
        Ok(Box::new(ScoreThresholdFilter::from_init(init)?))
    })?;
    Ok(())
}
