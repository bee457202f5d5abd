//! The two shipped Text-to-SQL pipelines.
//!
//! Generation synthesizes from scratch: generate SQL, keep what executes,
//! write questions, reasoning traces and prompts, then label difficulty.
//! Refinement starts from existing question/SQL seeds: verify them, expand
//! via augmentation, and mirror the generation tail. Both keep seed rows
//! alongside augmented rows; provenance lives in `parent_index`.

use super::Text2SqlConfig;
use crate::operator::KeyBinding;
use crate::pipeline::{ColumnDecl, NodeDef, PipelineDef};
use crate::value::ValueKind;
use serde_json::json;

fn db_json(config: &Text2SqlConfig) -> serde_json::Map<String, serde_json::Value> {
    let mut map = serde_json::Map::new();
    map.insert("database".into(), json!(config.database));
    map.insert("timeout_ms".into(), json!(config.timeout_ms));
    map.insert("sample_size".into(), json!(config.sample_size));
    map
}

fn node(name: &str, config: serde_json::Map<String, serde_json::Value>, binding: KeyBinding) -> NodeDef {
    NodeDef::new(name, serde_json::Value::Object(config), binding)
}

fn question_tail(config: &Text2SqlConfig, overwrite_question: bool) -> Vec<NodeDef> {
    let mut question_cfg = db_json(config);
    if overwrite_question {
        question_cfg.insert("overwrite".into(), json!(true));
    }
    vec![
        node(
            "QuestionGenerator",
            question_cfg,
            KeyBinding::new()
                .with("input_sql", "sql")
                .with("output_question", "question")
                .with("output_style", "style"),
        ),
        node(
            "CoTGenerator",
            db_json(config),
            KeyBinding::new()
                .with("input_question", "question")
                .with("input_sql", "sql")
                .with("output_cot", "cot"),
        ),
        node(
            "PromptGenerator",
            db_json(config),
            KeyBinding::new().with("input_question", "question").with("output_prompt", "prompt"),
        ),
        node(
            "SQLComponentSampleEvaluator",
            serde_json::Map::new(),
            KeyBinding::new()
                .with("input_sql", "sql")
                .with("output_component_difficulty", "component_difficulty"),
        ),
        {
            let mut cfg = db_json(config);
            cfg.insert("k".into(), json!(config.exec_trials));
            node(
                "SQLExecutionSampleEvaluator",
                cfg,
                KeyBinding::new()
                    .with("input_prompt", "prompt")
                    .with("input_sql", "sql")
                    .with("output_execution_difficulty", "execution_difficulty")
                    .with("output_exec_k", "exec_k")
                    .with("output_exec_n", "exec_n"),
            )
        },
    ]
}

fn execution_filter(config: &Text2SqlConfig) -> NodeDef {
    node(
        "SQLExecutionFilter",
        db_json(config),
        KeyBinding::new().with("input_sql", "sql").with("output_sql", "sql"),
    )
}

/// SQL Generation pipeline: 7 nodes, starting from an empty dataset.
pub fn build_generation_pipeline(config: &Text2SqlConfig) -> PipelineDef {
    let mut gen_cfg = db_json(config);
    gen_cfg.insert("count".into(), json!(config.count));
    gen_cfg.insert("template".into(), json!(config.dialect_template));
    let mut operators = vec![
        node(
            "SQLRowGenerator",
            gen_cfg,
            KeyBinding::new().with("output_sql", "sql").with("output_complexity", "complexity"),
        ),
        execution_filter(config),
    ];
    operators.extend(question_tail(config, false));
    PipelineDef {
        initial_columns: vec![],
        operators,
        serving: config.serving.clone(),
        storage: config.storage.clone(),
    }
}

/// SQL Refinement pipeline: 9 nodes, starting from seed rows with
/// `question` and `sql` columns. Regenerated questions overwrite the seeds'.
pub fn build_refinement_pipeline(config: &Text2SqlConfig) -> PipelineDef {
    let mut operators = vec![
        execution_filter(config),
        node(
            "Text2SQLConsistencyFilter",
            db_json(config),
            KeyBinding::new()
                .with("input_question", "question")
                .with("input_sql", "sql")
                .with("output_sql", "sql"),
        ),
        node(
            "SQLAugmentRowGenerator",
            db_json(config),
            KeyBinding::new()
                .with("input_sql", "sql")
                .with("output_sql", "sql")
                .with("output_strategy", "strategy")
                .with("output_parent_index", "parent_index"),
        ),
        execution_filter(config),
    ];
    operators.extend(question_tail(config, true));
    PipelineDef {
        initial_columns: vec![
            ColumnDecl { name: "question".into(), kind: ValueKind::Text },
            ColumnDecl { name: "sql".into(), kind: ValueKind::Text },
        ],
        operators,
        serving: config.serving.clone(),
        storage: config.storage.clone(),
    }
}
