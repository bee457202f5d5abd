//! Parameterized prompt templates. Templates carry named slots rendered by
//! `build_prompt`; operators enumerate compatible templates and bind one at
//! configuration time, so prompt variants swap without touching operator
//! logic. Bodies use flat `{slot}` substitution with `{{`/`}}` escapes — no
//! conditionals or loops; anything dynamic is selected by the operator and
//! passed through a slot.

use crate::operator::OperatorDescriptor;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TemplateError {
    #[error("template {0:?} is already registered")]
    DuplicateIdentifier(String),
    #[error("template {template:?} body references undeclared slot {placeholder:?}")]
    UndeclaredPlaceholder { template: String, placeholder: String },
    #[error("template {template:?} declares slot {slot:?} that never appears in the body")]
    UnusedSlot { template: String, slot: String },
    #[error("template {template:?} has an unbalanced brace at byte {offset}")]
    UnbalancedBrace { template: String, offset: usize },
    #[error("template {template:?} requires slot {slot:?} which the context does not supply")]
    MissingSlot { template: String, slot: String },
    #[error("context key {key:?} is not a slot of template {template:?}")]
    UnknownContextKey { template: String, key: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} is not compatible with operator {operator:?}; allowed: {allowed:?}")]
    Incompatible {
        operator: String,
        template: String,
        allowed: Vec<String>,
    },
    #[error("failed to load template file {path}: {detail}")]
    Load { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub identifier: String,
    pub description: String,
    pub slots: Vec<SlotSpec>,
    pub body: String,
}

/// Slot values for one rendering. Values are plain text; the renderer never
/// re-expands placeholders inside them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    values: BTreeMap<String, String>,
}

impl PromptContext {
    pub fn new() -> PromptContext {
        PromptContext::default()
    }

    pub fn with(mut self, slot: impl Into<String>, value: impl Into<String>) -> PromptContext {
        self.set(slot, value);
        self
    }

    pub fn set(&mut self, slot: impl Into<String>, value: impl Into<String>) {
        self.values.insert(slot.into(), value.into());
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.values.get(slot).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

enum Piece {
    Literal(String),
    Slot(String),
}

/// Splits a body into literal and slot pieces, decoding `{{`/`}}` escapes.
fn parse_body(identifier: &str, body: &str) -> Result<Vec<Piece>, TemplateError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((offset, c)) = chars.next() {
        match c {
            '{' => {
                if matches!(chars.peek(), Some((_, '{'))) {
                    chars.next();
                    literal.push('{');
                    continue;
                }
                let mut name = String::new();
                let mut closed = false;
                for (_, c) in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                    name.push(c);
                }
                if !closed || name.is_empty() || name.contains('{') {
                    return Err(TemplateError::UnbalancedBrace {
                        template: identifier.to_string(),
                        offset,
                    });
                }
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(name));
            }
            '}' => {
                if matches!(chars.peek(), Some((_, '}'))) {
                    chars.next();
                    literal.push('}');
                } else {
                    return Err(TemplateError::UnbalancedBrace {
                        template: identifier.to_string(),
                        offset,
                    });
                }
            }
            c => literal.push(c),
        }
    }
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    Ok(pieces)
}

impl PromptTemplate {
    pub fn new(
        identifier: impl Into<String>,
        description: impl Into<String>,
        slots: Vec<(&str, bool)>,
        body: impl Into<String>,
    ) -> PromptTemplate {
        PromptTemplate {
            identifier: identifier.into(),
            description: description.into(),
            slots: slots
                .into_iter()
                .map(|(name, required)| SlotSpec { name: name.to_string(), required })
                .collect(),
            body: body.into(),
        }
    }

    pub fn has_slot(&self, name: &str) -> bool {
        self.slots.iter().any(|s| s.name == name)
    }

    /// The placeholders the body actually references.
    pub fn placeholders(&self) -> Result<BTreeSet<String>, TemplateError> {
        let pieces = parse_body(&self.identifier, &self.body)?;
        Ok(pieces
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name),
                Piece::Literal(_) => None,
            })
            .collect())
    }

    /// Registration-time audit: the placeholder set extracted from the body
    /// must equal the declared slot set.
    pub fn audit(&self) -> Result<(), TemplateError> {
        let placeholders = self.placeholders()?;
        let declared: BTreeSet<String> = self.slots.iter().map(|s| s.name.clone()).collect();
        for placeholder in &placeholders {
            if !declared.contains(placeholder) {
                return Err(TemplateError::UndeclaredPlaceholder {
                    template: self.identifier.clone(),
                    placeholder: placeholder.clone(),
                });
            }
        }
        for slot in &declared {
            if !placeholders.contains(slot) {
                return Err(TemplateError::UnusedSlot {
                    template: self.identifier.clone(),
                    slot: slot.clone(),
                });
            }
        }
        Ok(())
    }

    fn render(&self, context: &PromptContext, strict: bool) -> Result<String, TemplateError> {
        if strict {
            for key in context.keys() {
                if !self.has_slot(key) {
                    return Err(TemplateError::UnknownContextKey {
                        template: self.identifier.clone(),
                        key: key.to_string(),
                    });
                }
            }
        }
        for slot in &self.slots {
            if slot.required && context.get(&slot.name).is_none() {
                return Err(TemplateError::MissingSlot {
                    template: self.identifier.clone(),
                    slot: slot.name.clone(),
                });
            }
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in parse_body(&self.identifier, &self.body)? {
            match piece {
                Piece::Literal(text) => out.push_str(&text),
                // Optional slots absent from the context render empty.
                Piece::Slot(name) => out.push_str(context.get(&name).unwrap_or("")),
            }
        }
        Ok(out)
    }

    /// Renders the body with each `{slot}` replaced by its context value.
    pub fn build_prompt(&self, context: &PromptContext) -> Result<String, TemplateError> {
        self.render(context, false)
    }

    /// Like [`build_prompt`](Self::build_prompt) but also rejects context
    /// keys that are not declared slots.
    pub fn build_prompt_strict(&self, context: &PromptContext) -> Result<String, TemplateError> {
        self.render(context, true)
    }
}

/// Immutable-after-startup collection of templates, keyed by identifier.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn new() -> TemplateRegistry {
        TemplateRegistry::default()
    }

    /// All shipped templates.
    pub fn with_builtins() -> TemplateRegistry {
        let mut registry = TemplateRegistry::new();
        for source in crate::template_builtin::BUILTIN_TEMPLATES {
            let template: PromptTemplate = serde_json::from_str(source)
                .unwrap_or_else(|e| panic!("builtin template is invalid JSON: {e}"));
            registry
                .register(template)
                .unwrap_or_else(|e| panic!("builtin template rejected: {e}"));
        }
        registry
    }

    pub fn register(&mut self, template: PromptTemplate) -> Result<(), TemplateError> {
        if self.templates.contains_key(&template.identifier) {
            return Err(TemplateError::DuplicateIdentifier(template.identifier));
        }
        template.audit()?;
        self.templates.insert(template.identifier.clone(), template);
        Ok(())
    }

    pub fn get(&self, identifier: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(identifier)
            .ok_or_else(|| TemplateError::UnknownTemplate(identifier.to_string()))
    }

    pub fn contains(&self, identifier: &str) -> bool {
        self.templates.contains_key(identifier)
    }

    pub fn identifiers(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    /// Loads every `*.json` file in a directory as a template definition.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, TemplateError> {
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::Load {
            path: dir.display().to_string(),
            detail: e.to_string(),
        })?;
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        let mut loaded = 0;
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Load {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            let template: PromptTemplate =
                serde_json::from_str(&text).map_err(|e| TemplateError::Load {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
            self.register(template)?;
            loaded += 1;
        }
        Ok(loaded)
    }
}

/// Checks that `template_id` is registered and enumerated in the operator's
/// allowed set, returning the template for the operator to hold. The binding
/// is fixed at configuration time.
pub fn bind_template<'a>(
    operator: &OperatorDescriptor,
    template_id: &str,
    registry: &'a TemplateRegistry,
) -> Result<&'a PromptTemplate, TemplateError> {
    let template = registry.get(template_id)?;
    if !operator.allowed_prompt_templates.iter().any(|t| t == template_id) {
        return Err(TemplateError::Incompatible {
            operator: operator.name.clone(),
            template: template_id.to_string(),
            allowed: operator.allowed_prompt_templates.clone(),
        });
    }
    Ok(template)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_template() -> PromptTemplate {
        PromptTemplate::new(
            "t",
            "test",
            vec![("schema", true), ("hint", false)],
            "Schema: {schema}\nHint: {hint}\nWrite SQL.",
        )
    }

    #[test]
    fn substitution_replaces_slots() {
        let template = PromptTemplate::new("t", "test", vec![("schema", true)], "Schema: {schema}\nWrite SQL.");
        let context = PromptContext::new().with("schema", "CREATE TABLE t(a INT)");
        assert_eq!(
            template.build_prompt(&context).unwrap(),
            "Schema: CREATE TABLE t(a INT)\nWrite SQL."
        );
    }

    #[test]
    fn optional_slot_renders_empty() {
        let template = schema_template();
        let context = PromptContext::new().with("schema", "S");
        assert_eq!(template.build_prompt(&context).unwrap(), "Schema: S\nHint: \nWrite SQL.");
    }

    #[test]
    fn missing_required_slot_is_named() {
        let template = schema_template();
        let err = template.build_prompt(&PromptContext::new()).unwrap_err();
        match err {
            TemplateError::MissingSlot { slot, .. } => assert_eq!(slot, "schema"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn literal_braces_escape() {
        let template = PromptTemplate::new(
            "t",
            "test",
            vec![("x", true)],
            "json like {{\"a\": {x}}} here",
        );
        let out = template.build_prompt(&PromptContext::new().with("x", "1")).unwrap();
        assert_eq!(out, "json like {\"a\": 1} here");
    }

    #[test]
    fn strict_mode_rejects_unknown_keys() {
        let template = schema_template();
        let context = PromptContext::new().with("schema", "S").with("bogus", "v");
        assert!(template.build_prompt(&context).is_ok());
        let err = template.build_prompt_strict(&context).unwrap_err();
        assert!(matches!(err, TemplateError::UnknownContextKey { ref key, .. } if key == "bogus"));
    }

    #[test]
    fn audit_catches_slot_drift() {
        let undeclared = PromptTemplate::new("t", "test", vec![], "Body {ghost}");
        assert!(matches!(
            undeclared.audit(),
            Err(TemplateError::UndeclaredPlaceholder { ref placeholder, .. }) if placeholder == "ghost"
        ));
        let unused = PromptTemplate::new("t", "test", vec![("never", true)], "Body only");
        assert!(matches!(
            unused.audit(),
            Err(TemplateError::UnusedSlot { ref slot, .. }) if slot == "never"
        ));
        let unbalanced = PromptTemplate::new("t", "test", vec![], "Body {oops");
        assert!(matches!(unbalanced.audit(), Err(TemplateError::UnbalancedBrace { .. })));
    }

    #[test]
    fn rendering_is_deterministic() {
        let template = schema_template();
        let context = PromptContext::new().with("schema", "S").with("hint", "H");
        let a = template.build_prompt(&context).unwrap();
        let b = template.build_prompt(&context).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut registry = TemplateRegistry::new();
        registry.register(schema_template()).unwrap();
        assert!(matches!(
            registry.register(schema_template()),
            Err(TemplateError::DuplicateIdentifier(_))
        ));
    }

    #[test]
    fn builtin_registry_loads_and_audits() {
        let registry = TemplateRegistry::with_builtins();
        assert!(registry.len() >= 16, "only {} templates shipped", registry.len());
        assert!(registry.contains("sql_gen_sqlite"));
        assert!(registry.contains("sql_gen_mysql"));
    }

    #[test]
    fn sqlite_and_mysql_generators_share_slots() {
        let registry = TemplateRegistry::with_builtins();
        let sqlite = registry.get("sql_gen_sqlite").unwrap();
        let mysql = registry.get("sql_gen_mysql").unwrap();
        let slots = |t: &PromptTemplate| {
            let mut s: Vec<(String, bool)> =
                t.slots.iter().map(|s| (s.name.clone(), s.required)).collect();
            s.sort();
            s
        };
        assert_eq!(slots(sqlite), slots(mysql));
        // Same context renders through both without reconfiguration.
        let context = PromptContext::new()
            .with("schema", "CREATE TABLE t(a INT)")
            .with("complexity", "simple")
            .with("complexity_definition", "single table, no aggregation")
            .with("advanced_hints", "CASE expressions");
        assert!(sqlite.build_prompt(&context).is_ok());
        assert!(mysql.build_prompt(&context).is_ok());
    }
}
