//! Text-to-SQL domain pack: the database connector contract with an
//! embedded SQLite implementation, ten domain operators, and the SQL
//! Generation and SQL Refinement pipelines, runnable end-to-end against
//! the bundled sample database with mock or live serving.

mod connector;
mod difficulty;
mod extract;
mod ops;
mod pipelines;
mod sqlparse;

pub use connector::{
    open_connector, results_match, ColumnMeta, ConnectorError, DatabaseConnector, ExecFailure,
    ExecResult, SchemaInfo, SqlValue, SqliteConnector, TableInfo,
};
pub use difficulty::{
    AugmentationStrategy, ComponentDifficulty, ComponentDifficultyPolicy, ExecTrialResult,
    ExecutionDifficultyPolicy, GenComplexity, QuestionStyle,
};
pub use extract::extract_sql;
pub use ops::{
    CotGenerator, PromptGenerator, QuestionGenerator, SqlAugmentRowGenerator,
    SqlComponentSampleEvaluator, SqlExecutionFilter, SqlExecutionSampleEvaluator, SqlRowGenerator,
    Text2SqlConsistencyFilter, ADVANCED_FUNCTIONS,
};
pub use pipelines::{build_generation_pipeline, build_refinement_pipeline};
pub use sqlparse::{parse_features, SqlFeatures, SqlParseError};

use crate::operator::{Registry, RegistryError};
use crate::pipeline::{ServingSpec, StorageSpec};
use std::path::Path;

/// Creation script of the bundled sample database (3 tables, 20 rows).
pub const SAMPLE_DB_SQL: &str = include_str!("../../assets/sample_db.sql");

/// Materializes the bundled sample database at `path`.
pub fn create_sample_database(path: &Path) -> Result<(), ConnectorError> {
    SqliteConnector::create_file_from_script(path, SAMPLE_DB_SQL)
}

/// Registers the Text-to-SQL operators.
pub fn register(registry: &mut Registry) -> Result<(), RegistryError> {
    ops::register(registry)
}

/// Settings shared by both pipeline builders.
#[derive(Debug, Clone)]
pub struct Text2SqlConfig {
    pub database: String,
    /// How many queries the generation pipeline synthesizes.
    pub count: usize,
    pub timeout_ms: u64,
    /// Trials per row for execution-difficulty classification.
    pub exec_trials: usize,
    /// Sampled values per column in schema prompts.
    pub sample_size: usize,
    pub dialect_template: String,
    pub serving: Option<ServingSpec>,
    pub storage: Option<StorageSpec>,
}

impl Text2SqlConfig {
    pub fn new(database: impl Into<String>) -> Text2SqlConfig {
        Text2SqlConfig {
            database: database.into(),
            count: 20,
            timeout_ms: 5000,
            exec_trials: 8,
            sample_size: 3,
            dialect_template: "sql_gen_sqlite".to_string(),
            serving: None,
            storage: None,
        }
    }
}
