//! Compile, run and list commands.

use crate::{EXIT_COMPILE, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use dataflow::digest::sha256_hex;
use dataflow::extension;
use dataflow::operator::{FunctionalCategory, Modality, Registry, Tier};
use dataflow::pipeline::{
    compile, forward, resume, write_manifest, CompileError, CompiledPlan, ExecutionState,
    ForwardOptions, PipelineDef,
};
use dataflow::serving::{BackendKind, ServingHandle};
use dataflow::storage::{StorageFormat, StorageSession, WriteDelta};
use dataflow::template::{PromptContext, TemplateRegistry};
use std::fs;
use std::path::{Path, PathBuf};

pub struct Registries {
    pub registry: Registry,
    pub templates: TemplateRegistry,
}

pub fn build_registries() -> Registries {
    let mut registry = Registry::new();
    dataflow::ops::register_builtins(&mut registry).expect("builtin operators register");
    dataflow::text2sql::register(&mut registry).expect("text2sql operators register");
    Registries { registry, templates: TemplateRegistry::with_builtins() }
}

/// Lazy extension loading: only when the definition references an operator
/// the built-in registry lacks. Sources, in order: the nearest ancestor of
/// the pipeline file holding an extension manifest, then every extension on
/// `DATAFLOW_EXT_PATH`.
pub fn ensure_extensions(
    regs: &mut Registries,
    def: &PipelineDef,
    pipeline_path: &Path,
) -> Result<(), String> {
    let unknown: Vec<&str> = def
        .operators
        .iter()
        .map(|n| n.name.as_str())
        .filter(|name| !regs.registry.contains(name))
        .collect();
    if unknown.is_empty() {
        return Ok(());
    }

    let mut extensions = Vec::new();
    let mut dir = pipeline_path.canonicalize().ok().and_then(|p| p.parent().map(Path::to_path_buf));
    while let Some(current) = dir {
        match extension::load_dir(&current) {
            Ok(Some(ext)) => {
                extensions.push(ext);
                break;
            }
            Ok(None) => dir = current.parent().map(Path::to_path_buf),
            Err(e) => return Err(e.to_string()),
        }
    }
    if let Ok(search_path) = std::env::var(extension::SEARCH_PATH_ENV) {
        extensions.extend(extension::discover(&search_path).map_err(|e| e.to_string())?);
    }
    for ext in &extensions {
        extension::install(ext, &mut regs.registry, &mut regs.templates).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn load_def(path: &Path) -> Result<(PipelineDef, Registries), u8> {
    let def = match PipelineDef::from_file(path) {
        Ok(def) => def,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(EXIT_USAGE);
        }
    };
    let mut regs = build_registries();
    if let Err(e) = ensure_extensions(&mut regs, &def, path) {
        eprintln!("error: failed to load extensions: {e}");
        return Err(EXIT_USAGE);
    }
    Ok((def, regs))
}

fn print_plan_summary(plan: &CompiledPlan) {
    println!("compiled: {} nodes, {} edges", plan.nodes.len(), plan.edges.len());
    println!("digest: {}", plan.digest);
    let order: Vec<String> = plan
        .topo_order()
        .iter()
        .map(|&i| format!("{i}:{}", plan.nodes[i].operator))
        .collect();
    println!("order: {}", order.join(" -> "));
}

pub fn cmd_compile(file: &Path, report_path: Option<&Path>) -> u8 {
    let (def, regs) = match load_def(file) {
        Ok(v) => v,
        Err(code) => return code,
    };
    match compile(&def, &regs.registry, &regs.templates) {
        Ok(plan) => {
            print_plan_summary(&plan);
            EXIT_OK
        }
        Err(CompileError::Report(report)) => {
            eprintln!("{} diagnostic(s):", report.len());
            eprintln!("{report}");
            if let Some(path) = report_path {
                let json = serde_json::to_string_pretty(&report.to_json()).expect("serializable report");
                if let Err(e) = fs::write(path, json + "\n") {
                    eprintln!("error: cannot write report to {}: {e}", path.display());
                    return EXIT_USAGE;
                }
            }
            EXIT_COMPILE
        }
        Err(CompileError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

fn build_serving(def: &PipelineDef) -> Result<Option<ServingHandle>, String> {
    let Some(spec) = &def.serving else { return Ok(None) };
    let handle = match (&spec.config.kind, &spec.script) {
        (BackendKind::Mock, Some(script)) => {
            ServingHandle::mock_scripted(spec.config.clone(), script.clone())
        }
        _ => ServingHandle::new(spec.config.clone()),
    };
    handle.map(Some).map_err(|e| e.to_string())
}

/// Exclusive run-directory lock; removed on drop.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(run_dir: &Path) -> Result<RunLock, String> {
        let path = run_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(format!(
                "run directory {} is locked by another run (remove {} if stale)",
                run_dir.display(),
                path.display()
            )),
            Err(e) => Err(format!("cannot create lock file {}: {e}", path.display())),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn cmd_run(
    file: &Path,
    resume_dir: Option<PathBuf>,
    dry_run: bool,
    seed: u64,
    out: Option<PathBuf>,
    prune_checkpoints: bool,
) -> u8 {
    let (def, regs) = match load_def(file) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let plan = match compile(&def, &regs.registry, &regs.templates) {
        Ok(plan) => plan,
        Err(CompileError::Report(report)) => {
            eprintln!("{} diagnostic(s):", report.len());
            eprintln!("{report}");
            let report_dir = resume_dir.or(out);
            if let Some(dir) = report_dir {
                if fs::create_dir_all(&dir).is_ok() {
                    let json =
                        serde_json::to_string_pretty(&report.to_json()).expect("serializable report");
                    let _ = fs::write(dir.join("compile-report.json"), json + "\n");
                }
            }
            return EXIT_COMPILE;
        }
        Err(CompileError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };

    if dry_run {
        print_plan_summary(&plan);
        println!("dry run: nothing executed");
        return EXIT_OK;
    }

    let resuming = resume_dir.is_some();
    let run_dir = resume_dir
        .or(out)
        .unwrap_or_else(|| PathBuf::from("runs").join(&plan.digest[..12]));
    if let Err(e) = fs::create_dir_all(&run_dir) {
        eprintln!("error: cannot create run directory {}: {e}", run_dir.display());
        return EXIT_USAGE;
    }
    let _lock = match RunLock::acquire(&run_dir) {
        Ok(lock) => lock,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };

    let format = def.storage.as_ref().map(|s| s.format).unwrap_or(StorageFormat::Jsonl);
    let output_path = run_dir.join(format!("output.{format}"));
    let state_path = run_dir.join("state.json");

    let session = match StorageSession::open(&output_path, format) {
        Ok(session) => session,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };

    // Fresh runs seed the working session from the input dataset; resumed
    // runs restore from the recorded checkpoint instead.
    if !resuming {
        if let Some(storage) = &def.storage {
            let input_path = Path::new(&storage.location);
            match StorageSession::open(input_path, storage.format) {
                Ok(input) => {
                    let dataset = match input.read(None) {
                        Ok(d) => d,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return EXIT_USAGE;
                        }
                    };
                    if let Err(e) = session.write(WriteDelta::Replace(dataset)) {
                        eprintln!("error: {e}");
                        return EXIT_USAGE;
                    }
                }
                Err(e) => {
                    eprintln!("error: cannot open input dataset: {e}");
                    return EXIT_USAGE;
                }
            }
        }
    }

    let serving = match build_serving(&def) {
        Ok(serving) => serving,
        Err(e) => {
            eprintln!("error: invalid serving configuration: {e}");
            return EXIT_USAGE;
        }
    };

    let options = ForwardOptions::new(run_dir.join("checkpoints")).with_seed(seed);
    let outcome = if resuming {
        let state = match ExecutionState::from_file(&state_path) {
            Ok(state) => state,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        resume(&plan, state, &session, serving.as_ref(), &regs.registry, &regs.templates, &options)
    } else {
        forward(&plan, &session, serving.as_ref(), &regs.registry, &regs.templates, &options)
    };

    match outcome {
        Ok(state) => {
            if let Err(e) = state.save(&state_path) {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
            if let Err(e) = write_manifest(&run_dir, &plan, &state) {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
            if prune_checkpoints {
                let _ = fs::remove_dir_all(run_dir.join("checkpoints"));
            }
            let rows = session.read(None).map(|d| d.len()).unwrap_or(0);
            let dataset_digest = session
                .read(None)
                .map(|d| sha256_hex(d.canonical_jsonl().as_bytes()))
                .unwrap_or_default();
            println!("finished: {rows} rows");
            println!("output: {}", output_path.display());
            println!("dataset digest: {dataset_digest}");
            EXIT_OK
        }
        Err(failure) => {
            // Keep the partial state on disk so the run can resume.
            let _ = failure.state.save(&state_path);
            let _ = write_manifest(&run_dir, &plan, &failure.state);
            eprintln!("error: {failure}");
            EXIT_RUNTIME
        }
    }
}

fn parse_filter<T>(
    raw: Option<String>,
    what: &str,
    valid: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Option<T>, String> {
    match raw {
        None => Ok(None),
        Some(raw) => match parse(&raw) {
            Some(v) => Ok(Some(v)),
            None => Err(format!("unknown {what} {raw:?}; valid values: {valid}")),
        },
    }
}

pub fn cmd_list(
    kind: &str,
    category: Option<String>,
    modality: Option<String>,
    tier: Option<String>,
    json: bool,
    render: Option<String>,
) -> u8 {
    let regs = build_registries();
    match kind {
        "operators" => {
            let parsed = (|| -> Result<_, String> {
                let category = parse_filter(
                    category,
                    "--category",
                    "generate_field, generate_rows, evaluate_sample, evaluate_dataset, filter, refine",
                    FunctionalCategory::parse,
                )?;
                let modality =
                    parse_filter(modality, "--modality", "text, visual, document", Modality::parse)?;
                let tier = parse_filter(tier, "--tier", "core, domain", Tier::parse)?;
                Ok((category, modality, tier))
            })();
            let (category, modality, tier) = match parsed {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            let descriptors = regs.registry.filtered(category, modality, tier);
            if json {
                let names: Vec<&str> = descriptors.iter().map(|d| d.name.as_str()).collect();
                let dump = regs.registry.dump();
                let filtered: Vec<&serde_json::Value> = dump
                    .as_array()
                    .expect("array dump")
                    .iter()
                    .filter(|v| names.contains(&v["name"].as_str().unwrap_or_default()))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&filtered).expect("serializable"));
            } else {
                println!("{:<28} {:<17} {:<9} {:<7} templates", "NAME", "CATEGORY", "MODALITY", "TIER");
                for d in descriptors {
                    println!(
                        "{:<28} {:<17} {:<9} {:<7} {}",
                        d.name,
                        d.category.as_str(),
                        d.modality.as_str(),
                        d.tier.as_str(),
                        d.allowed_prompt_templates.len()
                    );
                }
            }
            EXIT_OK
        }
        "templates" => {
            if let Some(id) = render {
                let template = match regs.templates.get(&id) {
                    Ok(t) => t,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_USAGE;
                    }
                };
                let mut context = PromptContext::new();
                for slot in &template.slots {
                    context.set(slot.name.clone(), format!("<{}>", slot.name));
                }
                match template.build_prompt(&context) {
                    Ok(text) => {
                        println!("{text}");
                        return EXIT_OK;
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_USAGE;
                    }
                }
            }
            if json {
                let items: Vec<serde_json::Value> = regs
                    .templates
                    .iter()
                    .map(|t| serde_json::to_value(t).expect("serializable template"))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&items).expect("serializable"));
            } else {
                println!("{:<34} {:<7} description", "IDENTIFIER", "slots");
                for t in regs.templates.iter() {
                    println!("{:<34} {:<7} {}", t.identifier, t.slots.len(), t.description);
                }
            }
            EXIT_OK
        }
        other => {
            eprintln!("error: unknown kind {other:?}; valid values: operators, templates");
            EXIT_USAGE
        }
    }
}
