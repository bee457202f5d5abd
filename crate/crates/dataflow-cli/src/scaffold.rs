//! Extension scaffolding: ready-to-use stubs for operators, prompt
//! templates, pipelines or a full repository layout. Generated trees
//! compile and run as-is: the operator stub is an identity refine, the
//! pipeline stub wires it over a small sample dataset, and the smoke
//! pipeline doubles as the category-law test (the executor asserts the law
//! on every node).

use crate::{EXIT_OK, EXIT_USAGE};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

const KINDS: [&str; 4] = ["operator", "prompt-template", "pipeline", "full-repository"];

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn pascal_case(name: &str) -> String {
    name.split('_')
        .filter(|part| !part.is_empty())
        .map(|part| {
            let mut chars = part.chars();
            match chars.next() {
                Some(first) => first.to_ascii_uppercase().to_string() + chars.as_str(),
                None => String::new(),
            }
        })
        .collect()
}

struct Plan {
    operator: bool,
    template: bool,
    pipeline: bool,
    full: bool,
}

fn parse_kinds(kinds: &[String]) -> Result<Plan, String> {
    let requested: Vec<&str> = if kinds.is_empty() {
        vec!["full-repository"]
    } else {
        kinds.iter().map(String::as_str).collect()
    };
    for kind in &requested {
        if !KINDS.contains(kind) {
            return Err(format!("unknown kind {kind:?}; valid values: {}", KINDS.join(", ")));
        }
    }
    let full = requested.contains(&"full-repository");
    Ok(Plan {
        operator: full || requested.contains(&"operator"),
        template: full || requested.contains(&"prompt-template"),
        pipeline: full || requested.contains(&"pipeline"),
        full,
    })
}

fn write(path: &Path, content: String) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
    }
    fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("serializable stub") + "\n"
}

pub fn cmd_init(name: &str, kinds: &[String], dir: &Path) -> u8 {
    if !valid_name(name) {
        eprintln!(
            "error: invalid extension name {name:?}; use lowercase letters, digits and underscores, starting with a letter"
        );
        return EXIT_USAGE;
    }
    let plan = match parse_kinds(kinds) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let target = dir.join(name);
    if target.exists() {
        let occupied = fs::read_dir(&target).map(|mut d| d.next().is_some()).unwrap_or(true);
        if occupied {
            eprintln!("error: target directory {} is not empty", target.display());
            return EXIT_USAGE;
        }
    }

    match generate(name, &plan, &target) {
        Ok(created) => {
            println!("created extension {name} at {}", target.display());
            for path in created {
                println!("  {}", path.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn generate(name: &str, plan: &Plan, target: &Path) -> Result<Vec<PathBuf>, String> {
    let mut created = Vec::new();
    let operator_name = format!("{}Refiner", pascal_case(name));
    let template_id = format!("{name}_prompt");
    let mut manifest = json!({
        "name": name,
        "operators": [],
        "operator_files": [],
        "templates": [],
        "pipelines": [],
    });

    if plan.operator {
        let operator = json!({
            "name": operator_name,
            "category": "refine",
            "modality": "text",
            "tier": "domain",
            "input_roles": [
                { "name": "input_text", "kind": "text", "required": true }
            ],
            "output_roles": [
                { "name": "output_text", "kind": "text" }
            ],
            "allowed_prompt_templates": [],
            "requires_serving": false,
            "behavior": "identity_refine"
        });
        let rel = format!("operators/{name}_refiner.json");
        write(&target.join(&rel), pretty(&operator))?;
        created.push(PathBuf::from(&rel));
        manifest["operator_files"].as_array_mut().expect("array").push(json!(rel));
    }

    if plan.template {
        let template = json!({
            "identifier": template_id,
            "description": format!("Starter template for the {name} extension."),
            "slots": [ { "name": "text", "required": true } ],
            "body": "Process the following input.\n\nInput:\n{text}\n\nReply with the processed text only."
        });
        let rel = format!("templates/{name}_prompt.json");
        write(&target.join(&rel), pretty(&template))?;
        created.push(PathBuf::from(&rel));
        manifest["templates"].as_array_mut().expect("array").push(json!(rel));
    }

    if plan.pipeline {
        let pipeline = json!({
            "initial_columns": [ { "name": "text", "kind": "text" } ],
            "operators": [
                {
                    "name": operator_name,
                    "config": {},
                    "bindings": { "input_text": "text", "output_text": "text" }
                }
            ],
            "storage": { "location": "tests/sample.jsonl", "format": "jsonl" }
        });
        let rel = format!("pipelines/{name}_pipeline.json");
        write(&target.join(&rel), pretty(&pipeline))?;
        created.push(PathBuf::from(&rel));
        manifest["pipelines"].as_array_mut().expect("array").push(json!(rel));

        // Smoke pipeline plus sample data: running it exercises the
        // category-law check on the stub operator.
        write(&target.join("tests/smoke.json"), pretty(&pipeline))?;
        created.push(PathBuf::from("tests/smoke.json"));
        let sample = "{\"text\":\"first sample\"}\n{\"text\":\"second sample\"}\n{\"text\":\"third sample\"}\n";
        write(&target.join("tests/sample.jsonl"), sample.to_string())?;
        created.push(PathBuf::from("tests/sample.jsonl"));
    }

    write(&target.join("dataflow-extension.json"), pretty(&manifest))?;
    created.push(PathBuf::from("dataflow-extension.json"));

    if plan.full {
        let readme = format!(
            "# {name}\n\n\
             A dataflow extension. The manifest (`dataflow-extension.json`) declares\n\
             the package contents; the engine discovers it through `DATAFLOW_EXT_PATH`\n\
             or by walking up from a pipeline file.\n\n\
             ## Layout\n\n\
             - `operators/` — operator descriptors with stock behaviors\n\
             - `templates/` — prompt template definitions\n\
             - `pipelines/` — pipeline definitions\n\
             - `tests/` — smoke pipeline and sample data\n\n\
             ## Try it\n\n\
             ```sh\n\
             dataflow compile pipelines/{name}_pipeline.json\n\
             dataflow run tests/smoke.json --out /tmp/{name}-smoke\n\
             ```\n\n\
             The run asserts each operator's category law, so the smoke pipeline\n\
             doubles as the law test for the stub operator. Replace the stub's\n\
             `identity_refine` behavior by registering a Rust operator under the\n\
             same descriptor when the extension grows real logic.\n"
        );
        write(&target.join("README.md"), readme)?;
        created.push(PathBuf::from("README.md"));
        write(&target.join(".gitignore"), "/runs/\n".to_string())?;
        created.push(PathBuf::from(".gitignore"));
    }
    Ok(created)
}
