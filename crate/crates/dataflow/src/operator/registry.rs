//! Operator registry: name-keyed descriptors plus deferred-construction
//! factories. Immutable after startup registration.

use super::run::{OperatorBehavior, OperatorFactory, OperatorInit};
use super::{check_naming, FunctionalCategory, Modality, NamingViolation, OperatorDescriptor, Tier};
use crate::operator::run::OperatorError;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, thiserror::Error)]
pub enum RegistryError {
    #[error("operator {0:?} is already registered")]
    DuplicateName(String),
    #[error(transparent)]
    Naming(#[from] NamingViolation),
    #[error("invalid descriptor for {name:?}: {detail}")]
    InvalidDescriptor { name: String, detail: String },
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
}

#[derive(Clone)]
pub struct RegistryEntry {
    pub descriptor: OperatorDescriptor,
    factory: Arc<OperatorFactory>,
}

impl RegistryEntry {
    /// Instantiates the configured behavior. Construction performs no
    /// storage or serving traffic; only `run` touches the session.
    pub fn configure(&self, init: &OperatorInit<'_>) -> Result<Box<dyn OperatorBehavior>, OperatorError> {
        (self.factory)(init)
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    /// Registers an operator after checking its descriptor invariants and
    /// the category naming convention.
    pub fn register<F>(&mut self, descriptor: OperatorDescriptor, factory: F) -> Result<(), RegistryError>
    where
        F: Fn(&OperatorInit<'_>) -> Result<Box<dyn OperatorBehavior>, OperatorError> + Send + Sync + 'static,
    {
        if self.entries.contains_key(&descriptor.name) {
            return Err(RegistryError::DuplicateName(descriptor.name.clone()));
        }
        descriptor.validate().map_err(|detail| RegistryError::InvalidDescriptor {
            name: descriptor.name.clone(),
            detail,
        })?;
        check_naming(&descriptor)?;
        let name = descriptor.name.clone();
        self.entries.insert(name, RegistryEntry { descriptor, factory: Arc::new(factory) });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&RegistryEntry, RegistryError> {
        self.entries
            .get(name)
            .ok_or_else(|| RegistryError::UnknownOperator(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &OperatorDescriptor> {
        self.entries.values().map(|e| &e.descriptor)
    }

    /// Descriptors filtered by any combination of category, modality and
    /// tier.
    pub fn filtered(
        &self,
        category: Option<FunctionalCategory>,
        modality: Option<Modality>,
        tier: Option<Tier>,
    ) -> Vec<&OperatorDescriptor> {
        self.descriptors()
            .filter(|d| category.map_or(true, |c| d.category == c))
            .filter(|d| modality.map_or(true, |m| d.modality == m))
            .filter(|d| tier.map_or(true, |t| d.tier == t))
            .collect()
    }

    /// The registry dump consumed by the CLI listing and external tooling:
    /// a JSON array of descriptor records.
    pub fn dump(&self) -> Value {
        let items: Vec<Value> = self
            .descriptors()
            .map(|d| {
                json!({
                    "name": d.name,
                    "category": d.category.as_str(),
                    "modality": d.modality.as_str(),
                    "tier": d.tier.as_str(),
                    "input_roles": d.input_roles,
                    "output_roles": d.output_roles,
                    "allowed_prompt_templates": d.allowed_prompt_templates,
                })
            })
            .collect();
        Value::Array(items)
    }
}
