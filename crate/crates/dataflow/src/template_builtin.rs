//! Embedded sources of the shipped prompt templates.

pub const BUILTIN_TEMPLATES: &[&str] = &[
    include_str!("../templates/consistency_judge.json"),
    include_str!("../templates/cot_gen.json"),
    include_str!("../templates/prompt_assembly.json"),
    include_str!("../templates/qa_answer_gen.json"),
    include_str!("../templates/quality_score.json"),
    include_str!("../templates/question_gen.json"),
    include_str!("../templates/question_style_ambiguous.json"),
    include_str!("../templates/question_style_colloquial.json"),
    include_str!("../templates/question_style_concise.json"),
    include_str!("../templates/question_style_declarative.json"),
    include_str!("../templates/question_style_descriptive.json"),
    include_str!("../templates/question_style_formal.json"),
    include_str!("../templates/question_style_imperative.json"),
    include_str!("../templates/question_style_interrogative.json"),
    include_str!("../templates/question_style_metaphorical.json"),
    include_str!("../templates/question_style_procedural.json"),
    include_str!("../templates/question_style_role_playing.json"),
    include_str!("../templates/sql_augment_advanced_features.json"),
    include_str!("../templates/sql_augment_business_logic.json"),
    include_str!("../templates/sql_augment_complexity.json"),
    include_str!("../templates/sql_augment_data_value.json"),
    include_str!("../templates/sql_augment_performance.json"),
    include_str!("../templates/sql_augment_query_structure.json"),
    include_str!("../templates/sql_gen_mysql.json"),
    include_str!("../templates/sql_gen_sqlite.json"),
    include_str!("../templates/sql_gen_vector_search.json"),
    include_str!("../templates/text_variant_gen.json"),
];
