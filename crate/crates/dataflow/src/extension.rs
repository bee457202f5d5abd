//! Extension packages: separately shipped bundles of operators, prompt
//! templates and pipelines, discovered through manifest files and loaded
//! lazily on first reference to a name the built-in registries lack.
//!
//! A manifest (`dataflow-extension.json`) declares operator descriptors
//! with data-only behaviors, template files and pipeline files. No code is
//! ever loaded from the manifest or the pipeline file: custom logic beyond
//! the stock behaviors means registering a Rust operator programmatically.

use crate::dataset::Dataset;
use crate::operator::{
    OperatorBehavior, OperatorDescriptor, OperatorError, Registry, RunContext,
};
use crate::template::{PromptTemplate, TemplateRegistry};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "dataflow-extension.json";
pub const SEARCH_PATH_ENV: &str = "DATAFLOW_EXT_PATH";

#[derive(Debug, thiserror::Error)]
pub enum ExtensionError {
    #[error("cannot read {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("invalid manifest {path}: {detail}")]
    InvalidManifest { path: PathBuf, detail: String },
    #[error("extension {name:?}: {detail}")]
    Install { name: String, detail: String },
}

/// Stock behaviors an extension may assign to a declared operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    /// Reads the dataset and writes it back unchanged; the placeholder for
    /// scaffolded refine operators.
    IdentityRefine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionOperator {
    #[serde(flatten)]
    pub descriptor: OperatorDescriptor,
    pub behavior: BehaviorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionManifest {
    pub name: String,
    #[serde(default)]
    pub operators: Vec<ExtensionOperator>,
    /// Operator descriptor files (one [`ExtensionOperator`] each), relative
    /// to the extension root.
    #[serde(default)]
    pub operator_files: Vec<String>,
    /// Template definition files, relative to the extension root.
    #[serde(default)]
    pub templates: Vec<String>,
    /// Pipeline definition files, relative to the extension root.
    #[serde(default)]
    pub pipelines: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedExtension {
    pub root: PathBuf,
    pub manifest: ExtensionManifest,
}

struct IdentityRefine;

impl OperatorBehavior for IdentityRefine {
    fn run(&self, ctx: &mut RunContext<'_>) -> Result<(), OperatorError> {
        let dataset: Dataset = ctx.read()?;
        ctx.write_replace(dataset)?;
        Ok(())
    }
}

fn read_manifest(path: &Path) -> Result<ExtensionManifest, ExtensionError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExtensionError::Io { path: path.to_path_buf(), detail: e.to_string() })?;
    serde_json::from_str(&text)
        .map_err(|e| ExtensionError::InvalidManifest { path: path.to_path_buf(), detail: e.to_string() })
}

/// Finds extensions under a colon-separated search path. Each entry either
/// is an extension root (holds a manifest) or is a directory of extension
/// roots. Missing entries are skipped.
pub fn discover(search_path: &str) -> Result<Vec<LoadedExtension>, ExtensionError> {
    let mut found = Vec::new();
    for entry in search_path.split(':').filter(|s| !s.is_empty()) {
        let root = PathBuf::from(entry);
        let direct = root.join(MANIFEST_FILE);
        if direct.is_file() {
            found.push(LoadedExtension { manifest: read_manifest(&direct)?, root });
            continue;
        }
        let Ok(children) = std::fs::read_dir(&root) else { continue };
        let mut paths: Vec<PathBuf> = children.filter_map(Result::ok).map(|e| e.path()).collect();
        paths.sort();
        for child in paths {
            let manifest_path = child.join(MANIFEST_FILE);
            if manifest_path.is_file() {
                found.push(LoadedExtension { manifest: read_manifest(&manifest_path)?, root: child });
            }
        }
    }
    Ok(found)
}

/// Loads the extension rooted at a directory, if its manifest exists.
pub fn load_dir(root: &Path) -> Result<Option<LoadedExtension>, ExtensionError> {
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Ok(None);
    }
    Ok(Some(LoadedExtension { manifest: read_manifest(&manifest_path)?, root: root.to_path_buf() }))
}

/// Installs an extension's operators and templates into the registries.
/// Operator names must still satisfy the naming convention and descriptor
/// invariants; duplicates are rejected like any other registration.
pub fn install(
    extension: &LoadedExtension,
    registry: &mut Registry,
    templates: &mut TemplateRegistry,
) -> Result<(), ExtensionError> {
    let name = extension.manifest.name.clone();
    let mut operators = extension.manifest.operators.clone();
    for relative in &extension.manifest.operator_files {
        let path = extension.root.join(relative);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ExtensionError::Io { path: path.clone(), detail: e.to_string() })?;
        let op: ExtensionOperator = serde_json::from_str(&text)
            .map_err(|e| ExtensionError::InvalidManifest { path, detail: e.to_string() })?;
        operators.push(op);
    }
    for op in operators {
        match op.behavior {
            BehaviorKind::IdentityRefine => registry
                .register(op.descriptor, |_| Ok(Box::new(IdentityRefine)))
                .map_err(|e| ExtensionError::Install { name: name.clone(), detail: e.to_string() })?,
        }
    }
    for relative in &extension.manifest.templates {
        let path = extension.root.join(relative);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ExtensionError::Io { path: path.clone(), detail: e.to_string() })?;
        let template: PromptTemplate = serde_json::from_str(&text)
            .map_err(|e| ExtensionError::InvalidManifest { path, detail: e.to_string() })?;
        templates
            .register(template)
            .map_err(|e| ExtensionError::Install { name: name.clone(), detail: e.to_string() })?;
    }
    Ok(())
}
