//! The Text-to-SQL operators: generation from scratch, seed augmentation,
//! execution- and consistency-based filtering, question and reasoning-trace
//! generation, prompt assembly and the two difficulty classifiers.
//!
//! Operators hold only configuration; database connections open inside
//! `run` (the two-phase contract keeps construction free of I/O) and all
//! SQL execution is serial against the shipped connector.

use super::connector::{open_connector, results_match, DatabaseConnector, SchemaInfo};
use super::difficulty::{
    AugmentationStrategy, ComponentDifficultyPolicy, ExecTrialResult, ExecutionDifficultyPolicy,
    GenComplexity, QuestionStyle,
};
use super::extract::extract_sql;
use super::sqlparse::parse_features;
use crate::dataset::{Dataset, Row};
use crate::operator::{
    FunctionalCategory, InputRole, Modality, OperatorBehavior, OperatorDescriptor, OperatorError,
    OperatorInit, OutputRole, Registry, RegistryError, RunContext, Tier,
};
use crate::serving::GenerationRequest;
use crate::template::{bind_template, PromptContext, PromptTemplate};
use crate::value::{FieldValue, ValueKind};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;
use std::collections::BTreeMap;
use std::time::Duration;

/// The advanced-SQL hint pool (see templates/README.md). Three hints are
/// drawn per generated query.
pub const ADVANCED_FUNCTIONS: [&str; 12] = [
    "window functions (ROW_NUMBER() OVER, RANK() OVER)",
    "CASE expressions",
    "COALESCE",
    "NULLIF",
    "CAST",
    "SUBSTR",
    "REPLACE",
    "UPPER/LOWER",
    "TRIM",
    "LENGTH",
    "ROUND",
    "date functions (DATE, STRFTIME)",
];

const HINTS_PER_PROMPT: usize = 3;

fn input(name: &str, kind: ValueKind) -> InputRole {
    InputRole { name: name.into(), kind: Some(kind), required: true }
}

fn output(name: &str, kind: ValueKind) -> OutputRole {
    OutputRole { name: name.into(), kind }
}

/// Database-facing configuration shared by most operators here.
struct DbConfig {
    location: String,
    timeout: Duration,
    sample_size: usize,
}

impl DbConfig {
    fn from_init(init: &OperatorInit<'_>) -> Result<DbConfig, OperatorError> {
        let location = init
            .config_str("database")
            .ok_or_else(|| init.config_error("missing required config key \"database\""))?
            .to_string();
        Ok(DbConfig {
            location,
            timeout: Duration::from_millis(init.config_u64("timeout_ms").unwrap_or(5000)),
            sample_size: init.config_u64("sample_size").unwrap_or(3) as usize,
        })
    }

    fn connect(&self, ctx: &RunContext<'_>) -> Result<Box<dyn DatabaseConnector>, OperatorError> {
        open_connector(&self.location).map_err(|e| ctx.behavior_error(e.to_string()))
    }

    fn schema(&self, ctx: &RunContext<'_>) -> Result<(Box<dyn DatabaseConnector>, SchemaInfo, String), OperatorError> {
        let mut connector = self.connect(ctx)?;
        let schema = connector
            .get_schema(self.sample_size)
            .map_err(|e| ctx.behavior_error(e.to_string()))?;
        let rendered = schema.render();
        Ok((connector, schema, rendered))
    }
}

/// Replaces or creates whole columns in one write. Without `overwrite`,
/// hitting an existing column is an error (generators never clobber
/// silently).
fn write_columns(
    ctx: &RunContext<'_>,
    dataset: &Dataset,
    columns: Vec<(String, Vec<FieldValue>)>,
    overwrite: bool,
) -> Result<(), OperatorError> {
    let mut next = dataset.clone();
    for (name, values) in columns {
        if !overwrite && next.has_column(&name) {
            return Err(ctx.behavior_error(format!(
                "output column {name:?} already exists; set \"overwrite\": true to replace it"
            )));
        }
        next.set_column(&name, values)?;
    }
    ctx.write_replace(next)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// SQLRowGenerator

/// Generates `count` SQL queries from the database schema alone. Each draw
/// picks a complexity level uniformly and a few advanced-function hints,
/// renders the dialect template and extracts the reply's fenced SQL.
pub struct SqlRowGenerator {
    template: PromptTemplate,
    db: DbConfig,
    count: usize,
}

impl SqlRowGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "SQLRowGenerator".into(),
            category: FunctionalCategory::GenerateRows,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![],
            output_roles: vec![output("output_sql", ValueKind::Text), output("output_complexity", ValueKind::Text)],
            allowed_prompt_templates: vec![
                "sql_gen_sqlite".into(),
                "sql_gen_mysql".into(),
                "sql_gen_vector_search".into(),
            ],
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<SqlRowGenerator, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("sql_gen_sqlite");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        Ok(SqlRowGenerator {
            template,
            db: DbConfig::from_init(init)?,
            count: init.config_u64("count").unwrap_or(10) as usize,
        })
    }
}

impl OperatorBehavior for SqlRowGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let sql_col = ctx.column("output_sql")?.to_string();
        let complexity_col = ctx.column("output_complexity")?.to_string();
        let (_connector, _schema, schema_text) = self.db.schema(ctx)?;
        let mut rng = ctx.rng();

        let mut requests = Vec::with_capacity(self.count);
        let mut complexities = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let complexity = GenComplexity::ALL[rng.gen_range(0..GenComplexity::ALL.len())];
            let hints: Vec<&str> = ADVANCED_FUNCTIONS
                .choose_multiple(&mut rng, HINTS_PER_PROMPT)
                .copied()
                .collect();
            let context = PromptContext::new()
                .with("schema", schema_text.clone())
                .with("complexity", complexity.as_str())
                .with("complexity_definition", complexity.definition())
                .with("advanced_hints", hints.join(", "));
            requests.push(GenerationRequest::new(self.template.build_prompt(&context)?)?);
            complexities.push(complexity);
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        let dataset = ctx.read()?;
        let mut rows = dataset.rows().to_vec();
        let mut failures = 0usize;
        for (complexity, response) in complexities.iter().zip(&responses) {
            let sql = response.text().and_then(extract_sql);
            match sql {
                Some(sql) => {
                    let mut row = Row::new();
                    row.set(sql_col.clone(), sql);
                    row.set(complexity_col.clone(), complexity.as_str());
                    rows.push(row);
                }
                None => failures += 1,
            }
        }
        ctx.record_failures(failures);
        ctx.record_metric("generated", (requests.len() - failures) as f64);

        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(rows)?;
        for column in [&sql_col, &complexity_col] {
            if !next.has_column(column) {
                next.set_column(column, vec![FieldValue::Null; next.len()])?;
            }
        }
        ctx.write_replace(next)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// SQLExecutionFilter

/// Keeps rows whose SQL executes successfully within the timeout; records
/// why each dropped row failed.
pub struct SqlExecutionFilter {
    db: DbConfig,
}

impl SqlExecutionFilter {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "SQLExecutionFilter".into(),
            category: FunctionalCategory::Filter,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_sql", ValueKind::Text)],
            output_roles: vec![output("output_sql", ValueKind::Text)],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<SqlExecutionFilter, OperatorError> {
        Ok(SqlExecutionFilter { db: DbConfig::from_init(init)? })
    }
}

impl OperatorBehavior for SqlExecutionFilter {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        use super::connector::ExecFailure;
        let sql_col = ctx.column("input_sql")?.to_string();
        let dataset = ctx.read()?;
        let mut connector = self.db.connect(ctx)?;
        let mut survivors = Vec::new();
        let (mut syntax, mut runtime, mut timeout, mut null_sql) = (0u64, 0u64, 0u64, 0u64);
        for row in dataset.rows() {
            match row.get(&sql_col).as_text() {
                None => null_sql += 1,
                Some(sql) => match connector.execute_sql(sql, self.db.timeout) {
                    Ok(_) => survivors.push(row.clone()),
                    Err(ExecFailure::Syntax(_)) => syntax += 1,
                    Err(ExecFailure::Runtime(_)) => runtime += 1,
                    Err(ExecFailure::Timeout(_)) => timeout += 1,
                },
            }
        }
        ctx.record_metric("dropped_syntax", syntax as f64);
        ctx.record_metric("dropped_runtime", runtime as f64);
        ctx.record_metric("dropped_timeout", timeout as f64);
        ctx.record_metric("dropped_null", null_sql as f64);
        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(survivors)?;
        ctx.write_replace(next)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Text2SQLConsistencyFilter

/// LLM-judged alignment between question and SQL; unaligned or unjudgeable
/// rows are dropped (conservatively) and counted.
pub struct Text2SqlConsistencyFilter {
    template: PromptTemplate,
    db: DbConfig,
}

impl Text2SqlConsistencyFilter {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "Text2SQLConsistencyFilter".into(),
            category: FunctionalCategory::Filter,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_question", ValueKind::Text), input("input_sql", ValueKind::Text)],
            output_roles: vec![output("output_sql", ValueKind::Text)],
            allowed_prompt_templates: vec!["consistency_judge".into()],
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<Text2SqlConsistencyFilter, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("consistency_judge");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        Ok(Text2SqlConsistencyFilter { template, db: DbConfig::from_init(init)? })
    }
}

impl OperatorBehavior for Text2SqlConsistencyFilter {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let question_col = ctx.column("input_question")?.to_string();
        let sql_col = ctx.column("input_sql")?.to_string();
        let (_connector, _schema, schema_text) = self.db.schema(ctx)?;
        let dataset = ctx.read()?;

        let verdict_schema = json!({
            "type": "object",
            "properties": { "aligned": { "type": "boolean" } },
            "required": ["aligned"]
        });
        let mut requests = Vec::new();
        let mut request_rows = Vec::new();
        let mut verdict_failures = 0usize;
        for (idx, row) in dataset.rows().iter().enumerate() {
            let question = row.get(&question_col).as_text();
            let sql = row.get(&sql_col).as_text();
            match (question, sql) {
                (Some(question), Some(sql)) => {
                    let context = PromptContext::new()
                        .with("question", question)
                        .with("sql", sql)
                        .with("schema", schema_text.clone());
                    let request = GenerationRequest::new(self.template.build_prompt(&context)?)?
                        .with_schema(verdict_schema.clone())?;
                    requests.push(request);
                    request_rows.push(idx);
                }
                _ => verdict_failures += 1,
            }
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        let mut keep = vec![false; dataset.len()];
        for (row_idx, response) in request_rows.iter().zip(&responses) {
            match response.structured().and_then(|v| v.get("aligned")).and_then(|v| v.as_bool()) {
                Some(true) => keep[*row_idx] = true,
                Some(false) => {}
                None => verdict_failures += 1,
            }
        }
        ctx.record_failures(verdict_failures);
        ctx.record_metric("verdict_failures", verdict_failures as f64);

        let survivors: Vec<Row> = dataset
            .rows()
            .iter()
            .enumerate()
            .filter(|(idx, _)| keep[*idx])
            .map(|(_, row)| row.clone())
            .collect();
        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(survivors)?;
        ctx.write_replace(next)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// SQLAugmentRowGenerator

/// Expands seed SQL: one strategy drawn per seed from the six augmentation
/// strategies, one augmented row per successful generation. Originals are
/// preserved and augmented rows carry their seed's index.
pub struct SqlAugmentRowGenerator {
    templates: BTreeMap<AugmentationStrategy, PromptTemplate>,
    db: DbConfig,
}

impl SqlAugmentRowGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "SQLAugmentRowGenerator".into(),
            category: FunctionalCategory::GenerateRows,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_sql", ValueKind::Text)],
            output_roles: vec![
                output("output_sql", ValueKind::Text),
                output("output_strategy", ValueKind::Text),
                output("output_parent_index", ValueKind::Number),
            ],
            allowed_prompt_templates: AugmentationStrategy::ALL
                .iter()
                .map(|s| s.template_id().to_string())
                .collect(),
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<SqlAugmentRowGenerator, OperatorError> {
        let mut templates = BTreeMap::new();
        for strategy in AugmentationStrategy::ALL {
            let template = bind_template(init.descriptor, strategy.template_id(), init.templates)?;
            templates.insert(strategy, template.clone());
        }
        Ok(SqlAugmentRowGenerator { templates, db: DbConfig::from_init(init)? })
    }
}

impl OperatorBehavior for SqlAugmentRowGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let sql_col = ctx.column("input_sql")?.to_string();
        let out_sql_col = ctx.column("output_sql")?.to_string();
        let strategy_col = ctx.column("output_strategy")?.to_string();
        let parent_col = ctx.column("output_parent_index")?.to_string();
        let (_connector, _schema, schema_text) = self.db.schema(ctx)?;
        let dataset = ctx.read()?;
        let mut rng = ctx.rng();

        let mut requests = Vec::new();
        let mut seeds = Vec::new();
        for (idx, row) in dataset.rows().iter().enumerate() {
            let Some(seed_sql) = row.get(&sql_col).as_text() else { continue };
            let strategy = AugmentationStrategy::ALL[rng.gen_range(0..AugmentationStrategy::ALL.len())];
            let template = &self.templates[&strategy];
            let context = PromptContext::new()
                .with("schema", schema_text.clone())
                .with("seed_sql", seed_sql);
            requests.push(GenerationRequest::new(template.build_prompt(&context)?)?);
            seeds.push((idx, strategy));
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        let mut rows = dataset.rows().to_vec();
        let mut failures = 0usize;
        for ((seed_idx, strategy), response) in seeds.iter().zip(&responses) {
            match response.text().and_then(extract_sql) {
                Some(sql) => {
                    let mut row = dataset.row(*seed_idx).clone();
                    row.set(out_sql_col.clone(), sql);
                    row.set(strategy_col.clone(), strategy.as_str());
                    row.set(parent_col.clone(), *seed_idx as i64);
                    rows.push(row);
                }
                None => failures += 1,
            }
        }
        ctx.record_failures(failures);

        let mut next = Dataset::with_columns(dataset.columns().to_vec())?;
        next.append_rows(rows)?;
        for column in [&strategy_col, &parent_col] {
            if !next.has_column(column) {
                next.set_column(column, vec![FieldValue::Null; next.len()])?;
            }
        }
        ctx.write_replace(next)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// QuestionGenerator

/// Writes a natural-language question per SQL row. With the generic
/// template a style leaf is drawn per row and passed through the style
/// slot; a pinned-style template fixes the style for every row.
pub struct QuestionGenerator {
    template: PromptTemplate,
    db: DbConfig,
    overwrite: bool,
}

impl QuestionGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        let mut allowed: Vec<String> = vec!["question_gen".into()];
        allowed.extend(QuestionStyle::ALL.iter().map(|s| s.template_id()));
        OperatorDescriptor {
            name: "QuestionGenerator".into(),
            category: FunctionalCategory::GenerateField,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_sql", ValueKind::Text)],
            output_roles: vec![
                output("output_question", ValueKind::Text),
                output("output_style", ValueKind::Text),
            ],
            allowed_prompt_templates: allowed,
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<QuestionGenerator, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("question_gen");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        Ok(QuestionGenerator {
            template,
            db: DbConfig::from_init(init)?,
            overwrite: init.config_bool("overwrite").unwrap_or(false),
        })
    }
}

impl OperatorBehavior for QuestionGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let sql_col = ctx.column("input_sql")?.to_string();
        let question_col = ctx.column("output_question")?.to_string();
        let style_col = ctx.column("output_style")?.to_string();
        let (_connector, _schema, schema_text) = self.db.schema(ctx)?;
        let dataset = ctx.read()?;
        let mut rng = ctx.rng();
        let draws_style = self.template.has_slot("style_instruction");
        let pinned_style = QuestionStyle::from_template_id(&self.template.identifier);

        let mut requests = Vec::new();
        let mut request_rows = Vec::new();
        let mut styles: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        let mut failures = 0usize;
        for (idx, row) in dataset.rows().iter().enumerate() {
            let Some(sql) = row.get(&sql_col).as_text() else {
                failures += 1;
                continue;
            };
            let mut context = PromptContext::new()
                .with("sql", sql)
                .with("schema", schema_text.clone());
            let style_label = if draws_style {
                let style = QuestionStyle::ALL[rng.gen_range(0..QuestionStyle::ALL.len())];
                context.set("style_instruction", style.instruction());
                style.as_str().to_string()
            } else {
                pinned_style
                    .map(|s| s.as_str().to_string())
                    .unwrap_or_else(|| self.template.identifier.clone())
            };
            styles[idx] = FieldValue::Text(style_label);
            requests.push(GenerationRequest::new(self.template.build_prompt(&context)?)?);
            request_rows.push(idx);
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        let mut questions: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        for (row_idx, response) in request_rows.iter().zip(&responses) {
            match response.text() {
                Some(text) if response.is_ok() => {
                    questions[*row_idx] = FieldValue::Text(text.trim().to_string())
                }
                _ => failures += 1,
            }
        }
        ctx.record_failures(failures);
        write_columns(
            ctx,
            &dataset,
            vec![(question_col, questions), (style_col, styles)],
            self.overwrite,
        )
    }
}

// ---------------------------------------------------------------------------
// CoTGenerator

/// Generates a reasoning trace per row and keeps it only when the trace's
/// final SQL execution-matches the reference SQL on the database. Invalid
/// traces leave a null cell (or the raw trace with `keep_invalid_cot`).
pub struct CotGenerator {
    template: PromptTemplate,
    db: DbConfig,
    keep_invalid_cot: bool,
}

impl CotGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "CoTGenerator".into(),
            category: FunctionalCategory::GenerateField,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_question", ValueKind::Text), input("input_sql", ValueKind::Text)],
            output_roles: vec![output("output_cot", ValueKind::Text)],
            allowed_prompt_templates: vec!["cot_gen".into()],
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<CotGenerator, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("cot_gen");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        Ok(CotGenerator {
            template,
            db: DbConfig::from_init(init)?,
            keep_invalid_cot: init.config_bool("keep_invalid_cot").unwrap_or(false),
        })
    }
}

impl OperatorBehavior for CotGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let question_col = ctx.column("input_question")?.to_string();
        let sql_col = ctx.column("input_sql")?.to_string();
        let cot_col = ctx.column("output_cot")?.to_string();
        let (mut connector, _schema, schema_text) = self.db.schema(ctx)?;
        let dataset = ctx.read()?;

        let mut requests = Vec::new();
        let mut request_rows = Vec::new();
        let mut failures = 0usize;
        for (idx, row) in dataset.rows().iter().enumerate() {
            match (row.get(&question_col).as_text(), row.get(&sql_col).as_text()) {
                (Some(question), Some(sql)) => {
                    let context = PromptContext::new()
                        .with("question", question)
                        .with("sql", sql)
                        .with("schema", schema_text.clone());
                    requests.push(GenerationRequest::new(self.template.build_prompt(&context)?)?);
                    request_rows.push(idx);
                }
                _ => failures += 1,
            }
        }

        let responses = ctx.serving()?.generate_from_input(&requests)?;
        let mut cots: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        let mut invalid = 0usize;
        let mut reference_failures = 0usize;
        for (row_idx, response) in request_rows.iter().zip(&responses) {
            let Some(trace) = response.text().filter(|_| response.is_ok()) else {
                failures += 1;
                continue;
            };
            let reference = dataset
                .row(*row_idx)
                .get(&sql_col)
                .as_text()
                .expect("checked above")
                .to_string();
            let reference_result = match connector.execute_sql(&reference, self.db.timeout) {
                Ok(result) => result,
                Err(_) => {
                    reference_failures += 1;
                    continue;
                }
            };
            let valid = extract_sql(trace)
                .and_then(|extracted| connector.execute_sql(&extracted, self.db.timeout).ok())
                .map(|result| results_match(&result.rows, &reference_result.rows))
                .unwrap_or(false);
            if valid {
                cots[*row_idx] = FieldValue::Text(trace.to_string());
            } else {
                invalid += 1;
                if self.keep_invalid_cot {
                    cots[*row_idx] = FieldValue::Text(trace.to_string());
                }
            }
        }
        ctx.record_failures(failures + invalid + reference_failures);
        ctx.record_metric("invalid_cot", invalid as f64);
        ctx.record_metric("reference_failures", reference_failures as f64);
        write_columns(ctx, &dataset, vec![(cot_col, cots)], false)
    }
}

// ---------------------------------------------------------------------------
// PromptGenerator

/// Assembles the final per-row prompt from instructions, the rendered
/// schema and the question. Deterministic; no serving call.
pub struct PromptGenerator {
    template: PromptTemplate,
    db: DbConfig,
    instructions: String,
}

const DEFAULT_PROMPT_INSTRUCTIONS: &str =
    "Answer the question by writing a single SQL query against the schema below.";

impl PromptGenerator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "PromptGenerator".into(),
            category: FunctionalCategory::GenerateField,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_question", ValueKind::Text)],
            output_roles: vec![output("output_prompt", ValueKind::Text)],
            allowed_prompt_templates: vec!["prompt_assembly".into()],
            requires_serving: false,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<PromptGenerator, OperatorError> {
        let template_id = init.config_str("template").unwrap_or("prompt_assembly");
        let template = bind_template(init.descriptor, template_id, init.templates)?.clone();
        Ok(PromptGenerator {
            template,
            db: DbConfig::from_init(init)?,
            instructions: init
                .config_str("instructions")
                .unwrap_or(DEFAULT_PROMPT_INSTRUCTIONS)
                .to_string(),
        })
    }
}

impl OperatorBehavior for PromptGenerator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let question_col = ctx.column("input_question")?.to_string();
        let prompt_col = ctx.column("output_prompt")?.to_string();
        let (_connector, _schema, schema_text) = self.db.schema(ctx)?;
        let dataset = ctx.read()?;
        let mut prompts = Vec::with_capacity(dataset.len());
        let mut failures = 0usize;
        for row in dataset.rows() {
            match row.get(&question_col).as_text() {
                Some(question) => {
                    let context = PromptContext::new()
                        .with("instructions", self.instructions.clone())
                        .with("schema", schema_text.clone())
                        .with("question", question);
                    prompts.push(FieldValue::Text(self.template.build_prompt(&context)?));
                }
                None => {
                    failures += 1;
                    prompts.push(FieldValue::Null);
                }
            }
        }
        ctx.record_failures(failures);
        write_columns(ctx, &dataset, vec![(prompt_col, prompts)], false)
    }
}

// ---------------------------------------------------------------------------
// SQLComponentSampleEvaluator

/// Labels each row's SQL with its syntactic component difficulty. A pure
/// function of the SQL text; unparseable SQL gets a null label.
pub struct SqlComponentSampleEvaluator {
    policy: ComponentDifficultyPolicy,
}

impl SqlComponentSampleEvaluator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "SQLComponentSampleEvaluator".into(),
            category: FunctionalCategory::EvaluateSample,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_sql", ValueKind::Text)],
            output_roles: vec![output("output_component_difficulty", ValueKind::Text)],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<SqlComponentSampleEvaluator, OperatorError> {
        let policy = match init.config.get("policy") {
            Some(value) => serde_json::from_value(value.clone())
                .map_err(|e| init.config_error(format!("invalid policy: {e}")))?,
            None => ComponentDifficultyPolicy::default(),
        };
        Ok(SqlComponentSampleEvaluator { policy })
    }
}

impl OperatorBehavior for SqlComponentSampleEvaluator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let sql_col = ctx.column("input_sql")?.to_string();
        let difficulty_col = ctx.column("output_component_difficulty")?.to_string();
        let dataset = ctx.read()?;
        let mut labels = Vec::with_capacity(dataset.len());
        let mut failures = 0usize;
        for row in dataset.rows() {
            let label = row
                .get(&sql_col)
                .as_text()
                .and_then(|sql| parse_features(sql).ok())
                .map(|features| self.policy.classify(&features));
            match label {
                Some(difficulty) => labels.push(FieldValue::Text(difficulty.as_str().to_string())),
                None => {
                    failures += 1;
                    labels.push(FieldValue::Null);
                }
            }
        }
        ctx.record_failures(failures);
        write_columns(ctx, &dataset, vec![(difficulty_col, labels)], false)
    }
}

// ---------------------------------------------------------------------------
// SQLExecutionSampleEvaluator

/// Model-dependent difficulty: the prompt is replayed `k` times and each
/// reply's extracted SQL must execution-match the reference; the success
/// ratio n/k maps to a difficulty band. Rows whose reference SQL fails are
/// flagged with a null label.
pub struct SqlExecutionSampleEvaluator {
    db: DbConfig,
    trials: usize,
    policy: ExecutionDifficultyPolicy,
}

impl SqlExecutionSampleEvaluator {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "SQLExecutionSampleEvaluator".into(),
            category: FunctionalCategory::EvaluateSample,
            modality: Modality::Text,
            tier: Tier::Domain,
            input_roles: vec![input("input_prompt", ValueKind::Text), input("input_sql", ValueKind::Text)],
            output_roles: vec![
                output("output_execution_difficulty", ValueKind::Text),
                output("output_exec_k", ValueKind::Number),
                output("output_exec_n", ValueKind::Number),
            ],
            allowed_prompt_templates: vec!["prompt_assembly".into()],
            requires_serving: true,
        }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<SqlExecutionSampleEvaluator, OperatorError> {
        let trials = init.config_u64("k").unwrap_or(8) as usize;
        if trials == 0 {
            return Err(init.config_error("k must be at least 1"));
        }
        Ok(SqlExecutionSampleEvaluator {
            db: DbConfig::from_init(init)?,
            trials,
            policy: ExecutionDifficultyPolicy::default(),
        })
    }
}

impl OperatorBehavior for SqlExecutionSampleEvaluator {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let prompt_col = ctx.column("input_prompt")?.to_string();
        let sql_col = ctx.column("input_sql")?.to_string();
        let difficulty_col = ctx.column("output_execution_difficulty")?.to_string();
        let k_col = ctx.column("output_exec_k")?.to_string();
        let n_col = ctx.column("output_exec_n")?.to_string();
        let mut connector = self.db.connect(ctx)?;
        let dataset = ctx.read()?;

        let mut requests = Vec::new();
        let mut request_rows = Vec::new();
        for (idx, row) in dataset.rows().iter().enumerate() {
            let (Some(prompt), Some(_)) =
                (row.get(&prompt_col).as_text(), row.get(&sql_col).as_text())
            else {
                continue;
            };
            for _ in 0..self.trials {
                requests.push(GenerationRequest::new(prompt)?);
                request_rows.push(idx);
            }
        }
        let responses = ctx.serving()?.generate_from_input(&requests)?;

        let mut difficulties: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        let mut ks: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        let mut ns: Vec<FieldValue> = vec![FieldValue::Null; dataset.len()];
        let mut reference_failures = 0usize;
        let mut cursor = 0usize;
        for (idx, row) in dataset.rows().iter().enumerate() {
            let (Some(_), Some(reference)) =
                (row.get(&prompt_col).as_text(), row.get(&sql_col).as_text())
            else {
                continue;
            };
            let trial_responses = &responses[cursor..cursor + self.trials];
            cursor += self.trials;
            let reference_result = match connector.execute_sql(reference, self.db.timeout) {
                Ok(result) => result,
                Err(_) => {
                    reference_failures += 1;
                    ks[idx] = FieldValue::int(self.trials as i64);
                    continue;
                }
            };
            let mut successes = 0usize;
            for response in trial_responses {
                let matched = response
                    .text()
                    .filter(|_| response.is_ok())
                    .and_then(extract_sql)
                    .and_then(|sql| connector.execute_sql(&sql, self.db.timeout).ok())
                    .map(|result| results_match(&result.rows, &reference_result.rows))
                    .unwrap_or(false);
                if matched {
                    successes += 1;
                }
            }
            let trial = ExecTrialResult::new(successes, self.trials);
            difficulties[idx] = FieldValue::Text(self.policy.classify(trial).as_str().to_string());
            ks[idx] = FieldValue::int(trial.k as i64);
            ns[idx] = FieldValue::int(trial.n as i64);
        }
        ctx.record_failures(reference_failures);
        ctx.record_metric("reference_failures", reference_failures as f64);
        write_columns(
            ctx,
            &dataset,
            vec![(difficulty_col, difficulties), (k_col, ks), (n_col, ns)],
            false,
        )
    }
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistryError> {
    registry.register(SqlRowGenerator::descriptor(), |init| {
        Ok(Box::new(SqlRowGenerator::from_init(init)?))
    })?;
    registry.register(SqlExecutionFilter::descriptor(), |init| {
        Ok(Box::new(SqlExecutionFilter::from_init(init)?))
    })?;
    registry.register(Text2SqlConsistencyFilter::descriptor(), |init| {
        Ok(Box::new(Text2SqlConsistencyFilter::from_init(init)?))
    })?;
    registry.register(SqlAugmentRowGenerator::descriptor(), |init| {
        Ok(Box::new(SqlAugmentRowGenerator::from_init(init)?))
    })?;
    registry.register(QuestionGenerator::descriptor(), |init| {
        Ok(Box::new(QuestionGenerator::from_init(init)?))
    })?;
    registry.register(CotGenerator::descriptor(), |init| {
        Ok(Box::new(CotGenerator::from_init(init)?))
    })?;
    registry.register(PromptGenerator::descriptor(), |init| {
        Ok(Box::new(PromptGenerator::from_init(init)?))
    })?;
    registry.register(SqlComponentSampleEvaluator::descriptor(), |init| {
        Ok(Box::new(SqlComponentSampleEvaluator::from_init(init)?))
    })?;
    registry.register(SqlExecutionSampleEvaluator::descriptor(), |init| {
        Ok(Box::new(SqlExecutionSampleEvaluator::from_init(init)?))
    })?;
    Ok(())
}
