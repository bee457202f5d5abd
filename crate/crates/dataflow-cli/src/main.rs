//! Command-line surface: compile, run and resume pipelines, list operators
//! and templates, and scaffold extension packages.
//!
//! Exit status contract: 0 success, 1 usage or I/O error, 2 compile
//! diagnostics, 3 runtime failure.

mod commands;
mod scaffold;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_COMPILE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "dataflow", version, about = "Data-preparation pipeline engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Statically validate a pipeline file and print the plan summary.
    Compile {
        /// Pipeline definition file (JSON).
        file: PathBuf,
        /// Write the diagnostic report as JSON to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compile and execute a pipeline (or resume an interrupted run).
    Run {
        /// Pipeline definition file (JSON).
        file: PathBuf,
        /// Resume from this run directory's recorded state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after compilation; execute nothing and write no dataset.
        #[arg(long)]
        dry_run: bool,
        /// Root seed for every seeded draw in operators.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run directory (defaults to runs/<plan digest prefix>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Remove per-node checkpoints after a successful run.
        #[arg(long)]
        prune_checkpoints: bool,
    },
    /// List registered operators or templates.
    List {
        /// What to list: "operators" or "templates".
        kind: String,
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        modality: Option<String>,
        #[arg(long)]
        tier: Option<String>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Render this template with a placeholder context (templates only).
        #[arg(long)]
        render: Option<String>,
    },
    /// Scaffold a new extension package.
    Init {
        /// Extension name (lowercase, digits, underscores, leading letter).
        name: String,
        /// Kinds to scaffold: operator, prompt-template, pipeline,
        /// full-repository (default).
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        /// Parent directory for the new extension.
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    // Die quietly when a pager closes the pipe instead of panicking.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let code = match cli.command {
        Command::Compile { file, report } => commands::cmd_compile(&file, report.as_deref()),
        Command::Run { file, resume, dry_run, seed, out, prune_checkpoints } => {
            commands::cmd_run(&file, resume, dry_run, seed, out, prune_checkpoints)
        }
        Command::List { kind, category, modality, tier, json, render } => {
            commands::cmd_list(&kind, category, modality, tier, json, render)
        }
        Command::Init { name, kinds, dir } => scaffold::cmd_init(&name, &kinds, &dir),
    };
    ExitCode::from(code)
}
