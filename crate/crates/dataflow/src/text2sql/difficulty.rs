//! Difficulty taxonomies and the two classification policies: syntactic
//! component difficulty from counted SQL features, and model-dependent
//! execution difficulty from the success ratio over repeated trials.

use super::sqlparse::SqlFeatures;
use serde::{Deserialize, Serialize};

/// Complexity level requested from the SQL generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenComplexity {
    Simple,
    Moderate,
    Complex,
    HighlyComplex,
}

impl GenComplexity {
    pub const ALL: [GenComplexity; 4] = [
        GenComplexity::Simple,
        GenComplexity::Moderate,
        GenComplexity::Complex,
        GenComplexity::HighlyComplex,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GenComplexity::Simple => "simple",
            GenComplexity::Moderate => "moderate",
            GenComplexity::Complex => "complex",
            GenComplexity::HighlyComplex => "highly complex",
        }
    }

    /// The definition handed to the LLM alongside the level name.
    pub fn definition(&self) -> &'static str {
        match self {
            GenComplexity::Simple => {
                "one table, plain column selection with at most one WHERE condition, no aggregation"
            }
            GenComplexity::Moderate => {
                "one or two tables with a join or an aggregate, simple GROUP BY or ORDER BY allowed"
            }
            GenComplexity::Complex => {
                "multiple joins, grouping with HAVING, or one nested subquery combining several conditions"
            }
            GenComplexity::HighlyComplex => {
                "several of: nested subqueries, set operators, window or advanced functions, multi-way joins"
            }
        }
    }
}

/// Spider-style difficulty from syntactic components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentDifficulty {
    Simple,
    Moderate,
    Hard,
    ExtraHard,
}

impl ComponentDifficulty {
    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentDifficulty::Simple => "simple",
            ComponentDifficulty::Moderate => "moderate",
            ComponentDifficulty::Hard => "hard",
            ComponentDifficulty::ExtraHard => "extra hard",
        }
    }
}

/// The six augmentation strategies for seed SQL expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationStrategy {
    DataValue,
    QueryStructure,
    BusinessLogic,
    Complexity,
    AdvancedFeatures,
    Performance,
}

impl AugmentationStrategy {
    pub const ALL: [AugmentationStrategy; 6] = [
        AugmentationStrategy::DataValue,
        AugmentationStrategy::QueryStructure,
        AugmentationStrategy::BusinessLogic,
        AugmentationStrategy::Complexity,
        AugmentationStrategy::AdvancedFeatures,
        AugmentationStrategy::Performance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentationStrategy::DataValue => "data_value",
            AugmentationStrategy::QueryStructure => "query_structure",
            AugmentationStrategy::BusinessLogic => "business_logic",
            AugmentationStrategy::Complexity => "complexity",
            AugmentationStrategy::AdvancedFeatures => "advanced_features",
            AugmentationStrategy::Performance => "performance",
        }
    }

    pub fn template_id(&self) -> &'static str {
        match self {
            AugmentationStrategy::DataValue => "sql_augment_data_value",
            AugmentationStrategy::QueryStructure => "sql_augment_query_structure",
            AugmentationStrategy::BusinessLogic => "sql_augment_business_logic",
            AugmentationStrategy::Complexity => "sql_augment_complexity",
            AugmentationStrategy::AdvancedFeatures => "sql_augment_advanced_features",
            AugmentationStrategy::Performance => "sql_augment_performance",
        }
    }
}

/// Question style taxonomy: four axes, eleven leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStyle {
    Formal,
    Colloquial,
    Imperative,
    Interrogative,
    Declarative,
    Concise,
    Descriptive,
    Ambiguous,
    Metaphorical,
    RolePlaying,
    Procedural,
}

impl QuestionStyle {
    pub const ALL: [QuestionStyle; 11] = [
        QuestionStyle::Formal,
        QuestionStyle::Colloquial,
        QuestionStyle::Imperative,
        QuestionStyle::Interrogative,
        QuestionStyle::Declarative,
        QuestionStyle::Concise,
        QuestionStyle::Descriptive,
        QuestionStyle::Ambiguous,
        QuestionStyle::Metaphorical,
        QuestionStyle::RolePlaying,
        QuestionStyle::Procedural,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionStyle::Formal => "formal",
            QuestionStyle::Colloquial => "colloquial",
            QuestionStyle::Imperative => "imperative",
            QuestionStyle::Interrogative => "interrogative",
            QuestionStyle::Declarative => "declarative",
            QuestionStyle::Concise => "concise",
            QuestionStyle::Descriptive => "descriptive",
            QuestionStyle::Ambiguous => "ambiguous",
            QuestionStyle::Metaphorical => "metaphorical",
            QuestionStyle::RolePlaying => "role_playing",
            QuestionStyle::Procedural => "procedural",
        }
    }

    /// The axis the leaf belongs to.
    pub fn axis(&self) -> &'static str {
        match self {
            QuestionStyle::Formal | QuestionStyle::Colloquial => "tone",
            QuestionStyle::Imperative | QuestionStyle::Interrogative | QuestionStyle::Declarative => {
                "intent"
            }
            QuestionStyle::Concise
            | QuestionStyle::Descriptive
            | QuestionStyle::Ambiguous
            | QuestionStyle::Metaphorical => "density",
            QuestionStyle::RolePlaying | QuestionStyle::Procedural => "interaction",
        }
    }

    /// Instruction text passed through the template's style slot.
    pub fn instruction(&self) -> &'static str {
        match self {
            QuestionStyle::Formal => "Use a formal, professional tone.",
            QuestionStyle::Colloquial => "Use a casual, conversational tone.",
            QuestionStyle::Imperative => "Phrase it as a command, e.g. \"List the ...\".",
            QuestionStyle::Interrogative => "Phrase it as a direct question ending with a question mark.",
            QuestionStyle::Declarative => "Phrase it as a declarative request, e.g. \"I need the ...\".",
            QuestionStyle::Concise => "Keep it as short as possible while staying unambiguous.",
            QuestionStyle::Descriptive => "Spell out the relevant context and conditions in full sentences.",
            QuestionStyle::Ambiguous => "Leave some details implicit so the reader must infer them from context.",
            QuestionStyle::Metaphorical => "Use figurative language while keeping the underlying request recoverable.",
            QuestionStyle::RolePlaying => "Write it in character, as a specific persona would ask it.",
            QuestionStyle::Procedural => "Phrase it as a step the reader performs within a larger workflow.",
        }
    }

    /// The pinned-style template shipping for this leaf.
    pub fn template_id(&self) -> String {
        format!("question_style_{}", self.as_str())
    }

    /// Reverse lookup from a pinned-style template identifier.
    pub fn from_template_id(id: &str) -> Option<QuestionStyle> {
        let leaf = id.strip_prefix("question_style_")?;
        QuestionStyle::ALL.into_iter().find(|s| s.as_str() == leaf)
    }
}

/// Outcome of `k` generation trials against one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecTrialResult {
    pub k: usize,
    pub n: usize,
}

impl ExecTrialResult {
    pub fn new(n: usize, k: usize) -> ExecTrialResult {
        assert!(n <= k, "successes cannot exceed trials");
        ExecTrialResult { k, n }
    }

    /// Exact ratio n/k.
    pub fn ratio(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            self.n as f64 / self.k as f64
        }
    }
}

/// Weighted feature score mapped to difficulty bands. The weights and bands
/// are a replaceable policy; the defaults are monotone in every counted
/// feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentDifficultyPolicy {
    pub aggregate_weight: usize,
    pub group_by_weight: usize,
    pub order_by_weight: usize,
    pub set_operation_weight: usize,
    pub nested_subquery_weight: usize,
    pub extra_join_weight: usize,
    pub wide_select_weight: usize,
    /// Selected-column count above which the wide-select weight applies.
    pub wide_select_threshold: usize,
    /// Upper score bounds (inclusive) for simple and moderate, then hard;
    /// anything above is extra hard.
    pub simple_max: usize,
    pub moderate_max: usize,
    pub hard_max: usize,
}

impl Default for ComponentDifficultyPolicy {
    fn default() -> Self {
        ComponentDifficultyPolicy {
            aggregate_weight: 1,
            group_by_weight: 1,
            order_by_weight: 1,
            set_operation_weight: 2,
            nested_subquery_weight: 2,
            extra_join_weight: 1,
            wide_select_weight: 1,
            wide_select_threshold: 3,
            simple_max: 0,
            moderate_max: 2,
            hard_max: 4,
        }
    }
}

impl ComponentDifficultyPolicy {
    pub fn score(&self, features: &SqlFeatures) -> usize {
        features.aggregates * self.aggregate_weight
            + usize::from(features.has_group_by) * self.group_by_weight
            + usize::from(features.has_order_by) * self.order_by_weight
            + features.set_operations * self.set_operation_weight
            + features.nested_subqueries * self.nested_subquery_weight
            + features.joins.saturating_sub(1) * self.extra_join_weight
            + usize::from(features.selected_columns > self.wide_select_threshold)
                * self.wide_select_weight
    }

    pub fn classify(&self, features: &SqlFeatures) -> ComponentDifficulty {
        let score = self.score(features);
        if score <= self.simple_max {
            ComponentDifficulty::Simple
        } else if score <= self.moderate_max {
            ComponentDifficulty::Moderate
        } else if score <= self.hard_max {
            ComponentDifficulty::Hard
        } else {
            ComponentDifficulty::ExtraHard
        }
    }
}

/// Success-ratio bands for execution difficulty. Defaults: ratio ≥ 0.8 is
/// simple, 0.5 ≤ ratio < 0.8 moderate, 0 < ratio < 0.5 hard, ratio = 0
/// extra hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionDifficultyPolicy {
    pub simple_min_ratio: f64,
    pub moderate_min_ratio: f64,
}

impl Default for ExecutionDifficultyPolicy {
    fn default() -> Self {
        ExecutionDifficultyPolicy { simple_min_ratio: 0.8, moderate_min_ratio: 0.5 }
    }
}

impl ExecutionDifficultyPolicy {
    pub fn classify(&self, trial: ExecTrialResult) -> ComponentDifficulty {
        let ratio = trial.ratio();
        if ratio >= self.simple_min_ratio {
            ComponentDifficulty::Simple
        } else if ratio >= self.moderate_min_ratio {
            ComponentDifficulty::Moderate
        } else if ratio > 0.0 {
            ComponentDifficulty::Hard
        } else {
            ComponentDifficulty::ExtraHard
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text2sql::sqlparse::parse_features;

    fn classify(sql: &str) -> ComponentDifficulty {
        ComponentDifficultyPolicy::default().classify(&parse_features(sql).unwrap())
    }

    #[test]
    fn rule_table_on_the_named_examples() {
        assert_eq!(classify("SELECT name FROM singer"), ComponentDifficulty::Simple);
        assert_eq!(
            classify("SELECT country, COUNT(*) FROM singer GROUP BY country"),
            ComponentDifficulty::Moderate
        );
        assert_eq!(
            classify(
                "SELECT name FROM singer WHERE id IN \
                 (SELECT sid FROM show GROUP BY sid HAVING COUNT(*) > 2) ORDER BY name"
            ),
            ComponentDifficulty::ExtraHard
        );
    }

    #[test]
    fn execution_bands_match_the_threshold_table() {
        let policy = ExecutionDifficultyPolicy::default();
        assert_eq!(policy.classify(ExecTrialResult::new(8, 8)), ComponentDifficulty::Simple);
        assert_eq!(policy.classify(ExecTrialResult::new(5, 8)), ComponentDifficulty::Moderate);
        assert_eq!(policy.classify(ExecTrialResult::new(3, 8)), ComponentDifficulty::Hard);
        assert_eq!(policy.classify(ExecTrialResult::new(0, 8)), ComponentDifficulty::ExtraHard);
    }

    #[test]
    fn ratio_is_exact() {
        let trial = ExecTrialResult::new(3, 8);
        assert_eq!(trial.ratio() * trial.k as f64, trial.n as f64);
    }

    #[test]
    fn style_taxonomy_has_eleven_leaves_on_four_axes() {
        assert_eq!(QuestionStyle::ALL.len(), 11);
        let mut axes: Vec<&str> = QuestionStyle::ALL.iter().map(|s| s.axis()).collect();
        axes.sort_unstable();
        axes.dedup();
        assert_eq!(axes, vec!["density", "intent", "interaction", "tone"]);
        for style in QuestionStyle::ALL {
            assert_eq!(QuestionStyle::from_template_id(&style.template_id()), Some(style));
        }
    }

    #[test]
    fn single_join_is_free_but_extra_joins_cost() {
        let one = parse_features("SELECT a FROM t JOIN u ON t.id = u.id").unwrap();
        let two =
            parse_features("SELECT a FROM t JOIN u ON t.id = u.id JOIN v ON u.id = v.id").unwrap();
        let policy = ComponentDifficultyPolicy::default();
        assert_eq!(policy.score(&one), 0);
        assert_eq!(policy.score(&two), 1);
    }
}
