//! Rule-based refiners: in-place text cleanup that never changes the row
//! count or adds columns.

use crate::operator::{
    FunctionalCategory, InputRole, Modality, OperatorBehavior, OperatorDescriptor, OperatorError,
    OperatorInit, OutputRole, Registry, RegistryError, RunContext, Tier,
};
use crate::value::{FieldValue, ValueKind};
use regex::Regex;

/// Scheme-anchored URL matching: `http`/`https`, `://`, then a run of
/// non-whitespace. No bare-domain heuristics, so prose like "example.com
/// usage" is left alone.
const URL_PATTERN: &str = r"https?://\S+";

/// Codepoint ranges treated as emoji by the `emoji` class. Conservative:
/// symbol and pictograph blocks plus the emoji variation selector, no
/// joiners that double as text-script characters.
const EMOJI_RANGES: &[(u32, u32)] = &[
    (0x2600, 0x26FF),   // miscellaneous symbols
    (0x2700, 0x27BF),   // dingbats
    (0xFE0F, 0xFE0F),   // variation selector-16
    (0x1F1E6, 0x1F1FF), // regional indicators
    (0x1F300, 0x1F5FF), // symbols and pictographs
    (0x1F600, 0x1F64F), // emoticons
    (0x1F680, 0x1F6FF), // transport and map symbols
    (0x1F900, 0x1F9FF), // supplemental symbols
    (0x1FA70, 0x1FAFF), // symbols extended-A
];

fn refine_cells<F>(ctx: &mut RunContext<'_>, transform: F) -> Result<(), OperatorError>
where
    F: Fn(&str) -> String,
{
    let input = ctx.column("input_text")?.to_string();
    let output = ctx.column("output_text")?.to_string();
    let dataset = ctx.read()?;
    let mut next = dataset.clone();
    let mut values = Vec::with_capacity(dataset.len());
    for (idx, row) in dataset.rows().iter().enumerate() {
        match row.get(&input) {
            FieldValue::Text(s) => values.push(FieldValue::Text(transform(s))),
            FieldValue::Null => values.push(FieldValue::Null),
            other => {
                return Err(ctx.behavior_error(format!(
                    "row {idx}: column {input:?} holds {} values, expected text",
                    other.kind()
                )))
            }
        }
    }
    next.set_column(&output, values)?;
    ctx.write_replace(next)?;
    Ok(())
}

/// Removes every scheme-anchored URL from the bound text column.
pub struct UrlRefiner {
    pattern: Regex,
}

impl UrlRefiner {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "UrlRefiner".into(),
            category: FunctionalCategory::Refine,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_text".into(),
                kind: Some(ValueKind::Text),
                required: true,
            }],
            output_roles: vec![OutputRole { name: "output_text".into(), kind: ValueKind::Text }],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }

    pub fn new() -> UrlRefiner {
        UrlRefiner { pattern: Regex::new(URL_PATTERN).expect("valid url pattern") }
    }

    pub fn strip_urls(&self, text: &str) -> String {
        self.pattern.replace_all(text, "").into_owned()
    }
}

impl Default for UrlRefiner {
    fn default() -> Self {
        UrlRefiner::new()
    }
}

impl OperatorBehavior for UrlRefiner {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        refine_cells(ctx, |s| self.strip_urls(s))
    }
}

/// Removes codepoints belonging to a configured class. Emoji removal is the
/// shipped configuration; explicit ranges cover everything else.
pub struct CodepointClassRefiner {
    ranges: Vec<(u32, u32)>,
}

impl CodepointClassRefiner {
    pub fn descriptor() -> OperatorDescriptor {
        OperatorDescriptor {
            name: "CodepointClassRefiner".into(),
            category: FunctionalCategory::Refine,
            modality: Modality::Text,
            tier: Tier::Core,
            input_roles: vec![InputRole {
                name: "input_text".into(),
                kind: Some(ValueKind::Text),
                required: true,
            }],
            output_roles: vec![OutputRole { name: "output_text".into(), kind: ValueKind::Text }],
            allowed_prompt_templates: vec![],
            requires_serving: false,
        }
    }

    pub fn emoji() -> CodepointClassRefiner {
        CodepointClassRefiner { ranges: EMOJI_RANGES.to_vec() }
    }

    pub fn from_init(init: &OperatorInit<'_>) -> Result<CodepointClassRefiner, OperatorError> {
        match init.config_str("class").unwrap_or("emoji") {
            "emoji" => Ok(CodepointClassRefiner::emoji()),
            other => Err(init.config_error(format!("unknown codepoint class {other:?}"))),
        }
    }

    pub fn strip(&self, text: &str) -> String {
        text.chars()
            .filter(|c| {
                let cp = *c as u32;
                !self.ranges.iter().any(|(lo, hi)| (*lo..=*hi).contains(&cp))
            })
            .collect()
    }
}

impl OperatorBehavior for CodepointClassRefiner {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        refine_cells(ctx, |s| self.strip(s))
    }
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistryError> {
    registry.register(UrlRefiner::descriptor(), |_| Ok(Box::new(UrlRefiner::new())))?;
    registry.register(CodepointClassRefiner::descriptor(), |init| {
        Ok(Box::new(CodepointClassRefiner::from_init(init)?))
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Row};
    use crate::operator::{run_operator, KeyBinding};
    use crate::storage::StorageSession;

    fn run_url_refiner(texts: &[&str]) -> Vec<FieldValue> {
        let rows = texts.iter().map(|t| Row::new().with("text", *t)).collect();
        let session = StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap());
        let binding = KeyBinding::new().with("input_text", "text").with("output_text", "text");
        let report = run_operator(
            &UrlRefiner::descriptor(),
            &UrlRefiner::new(),
            &session,
            &binding,
            None,
            [0; 32],
        )
        .unwrap();
        assert_eq!(report.rows_in, report.rows_out);
        session.read(None).unwrap().column_values("text").unwrap()
    }

    #[test]
    fn urls_are_removed() {
        let out = run_url_refiner(&["see https://x.io/a now"]);
        assert_eq!(out[0], FieldValue::text("see  now"));
    }

    #[test]
    fn text_without_urls_is_byte_identical() {
        let out = run_url_refiner(&["no links here", "example.com usage stays"]);
        assert_eq!(out[0], FieldValue::text("no links here"));
        assert_eq!(out[1], FieldValue::text("example.com usage stays"));
    }

    #[test]
    fn refiner_is_idempotent() {
        let refiner = UrlRefiner::new();
        let once = refiner.strip_urls("a http://b.c/d e https://f.g h");
        let twice = refiner.strip_urls(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn thousand_rows_stay_thousand() {
        let texts: Vec<String> =
            (0..1000).map(|i| format!("row {i} https://example.org/{i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let out = run_url_refiner(&refs);
        assert_eq!(out.len(), 1000);
        assert_eq!(out[7], FieldValue::text("row 7 "));
    }

    #[test]
    fn non_text_cell_is_an_error() {
        let rows = vec![Row::new().with("text", "fine"), Row::new().with("text", 3i64)];
        let session = StorageSession::in_memory_with(Dataset::from_rows(rows).unwrap());
        let binding = KeyBinding::new().with("input_text", "text").with("output_text", "text");
        let err = run_operator(
            &UrlRefiner::descriptor(),
            &UrlRefiner::new(),
            &session,
            &binding,
            None,
            [0; 32],
        )
        .unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn emoji_class_strips_pictographs() {
        let refiner = CodepointClassRefiner::emoji();
        assert_eq!(refiner.strip("done ✅ ship 🚀!"), "done  ship !");
        assert_eq!(refiner.strip("plain text"), "plain text");
        // Full-width characters are not emoji.
        assert_eq!(refiner.strip("ＡＢＣ　ＤＥＦ"), "ＡＢＣ　ＤＥＦ");
    }
}
