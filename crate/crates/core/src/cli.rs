//! The `sta` command-line front end.
//!
//! Exit codes: 0 success, 1 program diagnostics (macro, parse, or validation
//! problems), 2 runtime errors. Standard output carries the command's primary
//! artifact; diagnostics go to standard error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::compile::{to_dot, validate, CompiledProgram};
use crate::lang::{expand_macros, parse_define, parse_program, MacroBindings};
use crate::runtime::{
    replay_trace, run_program, BackendSet, Outputs, RunOptions, TraceRecord, Value,
};

#[derive(Parser)]
#[command(
    name = "sta",
    about = "Compile and run STA programs: structured questionnaires over language models",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand macros, parse, and validate a program.
    Check {
        /// Program file (`.sta`).
        file: PathBuf,
        /// Macro binding `NAME=VALUE` (repeatable).
        #[arg(long = "define", value_name = "NAME=VALUE")]
        defines: Vec<String>,
    },
    /// Print the rendered header of one prompt, byte for byte.
    Render {
        /// Program file (`.sta`).
        file: PathBuf,
        /// Macro binding `NAME=VALUE` (repeatable).
        #[arg(long = "define", value_name = "NAME=VALUE")]
        defines: Vec<String>,
        /// Prompt to render; defaults to the only prompt of the program.
        #[arg(long)]
        prompt: Option<String>,
    },
    /// Export the control-flow graph and per-prompt automata as DOT.
    Graph {
        /// Program file (`.sta`).
        file: PathBuf,
        /// Macro binding `NAME=VALUE` (repeatable).
        #[arg(long = "define", value_name = "NAME=VALUE")]
        defines: Vec<String>,
    },
    /// Execute a program and print its outputs as JSON.
    Run {
        /// Program file (`.sta`).
        file: PathBuf,
        /// Macro binding `NAME=VALUE` (repeatable).
        #[arg(long = "define", value_name = "NAME=VALUE")]
        defines: Vec<String>,
        /// Program input `NAME=VALUE` (repeatable; repeated names build a list).
        #[arg(long = "input", value_name = "NAME=VALUE")]
        inputs: Vec<String>,
        /// Backend configuration file (JSON).
        #[arg(long)]
        backends: Option<PathBuf>,
        /// Write the execution trace to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-execute a recorded trace and print the reconstructed outputs.
    Replay {
        /// Program file (`.sta`); macro bindings come from the trace.
        file: PathBuf,
        /// Trace file produced by `run --trace`.
        #[arg(long)]
        trace: PathBuf,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage; keep its exit semantics.
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.command {
        Command::Check { file, defines } => cmd_check(&file, &defines),
        Command::Render {
            file,
            defines,
            prompt,
        } => cmd_render(&file, &defines, prompt.as_deref()),
        Command::Graph { file, defines } => cmd_graph(&file, &defines),
        Command::Run {
            file,
            defines,
            inputs,
            backends,
            trace,
        } => cmd_run(&file, &defines, &inputs, backends.as_deref(), trace.as_deref()),
        Command::Replay { file, trace } => cmd_replay(&file, &trace),
    }
}

fn diagnostic(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    1
}

fn runtime_error(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    2
}

fn parse_defines(defines: &[String]) -> Result<MacroBindings, String> {
    let mut bindings = MacroBindings::new();
    for define in defines {
        let (name, value) = parse_define(define)?;
        bindings.insert(name, value);
    }
    Ok(bindings)
}

/// Read, expand, parse, and validate. All failures are diagnostics.
fn load_program(file: &Path, bindings: &MacroBindings) -> Result<CompiledProgram, String> {
    let source = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let expanded =
        expand_macros(&source, bindings).map_err(|e| format!("{}: {e}", file.display()))?;
    let ast =
        parse_program(&expanded).map_err(|e| format!("{}: {e}", file.display()))?;
    validate(&ast).map_err(|e| format!("{}: {e}", file.display()))
}

fn cmd_check(file: &Path, defines: &[String]) -> i32 {
    let bindings = match parse_defines(defines) {
        Ok(b) => b,
        Err(e) => return diagnostic(e),
    };
    match load_program(file, &bindings) {
        Ok(program) => {
            println!(
                "ok: {} prompt(s), entry `{}`",
                program.prompts().len(),
                program.entry
            );
            0
        }
        Err(e) => diagnostic(e),
    }
}

fn cmd_render(file: &Path, defines: &[String], prompt: Option<&str>) -> i32 {
    let bindings = match parse_defines(defines) {
        Ok(b) => b,
        Err(e) => return diagnostic(e),
    };
    let program = match load_program(file, &bindings) {
        Ok(p) => p,
        Err(e) => return diagnostic(e),
    };
    let name = match prompt {
        Some(name) => name.to_string(),
        None if program.prompts().len() == 1 => program.prompts()[0].decl.name.clone(),
        None => {
            return diagnostic(format!(
                "program has {} prompts; pass --prompt NAME",
                program.prompts().len()
            ))
        }
    };
    let Some(compiled) = program.prompt(&name) else {
        return diagnostic(format!("unknown prompt `{name}`"));
    };
    // The header already ends with its newline; write the exact bytes.
    print!("{}", compiled.header_text);
    let _ = std::io::stdout().flush();
    0
}

fn cmd_graph(file: &Path, defines: &[String]) -> i32 {
    let bindings = match parse_defines(defines) {
        Ok(b) => b,
        Err(e) => return diagnostic(e),
    };
    match load_program(file, &bindings) {
        Ok(program) => {
            print!("{}", to_dot(&program));
            0
        }
        Err(e) => diagnostic(e),
    }
}

/// Repeated `--input K=V` flags; a repeated key accumulates into a list.
fn parse_inputs(pairs: &[String]) -> Result<BTreeMap<String, Value>, String> {
    let mut inputs: BTreeMap<String, Value> = BTreeMap::new();
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got `{pair}`"))?;
        match inputs.remove(key) {
            None => {
                inputs.insert(key.to_string(), Value::Text(value.to_string()));
            }
            Some(Value::Text(first)) => {
                inputs.insert(
                    key.to_string(),
                    Value::List(vec![first, value.to_string()]),
                );
            }
            Some(Value::List(mut list)) => {
                list.push(value.to_string());
                inputs.insert(key.to_string(), Value::List(list));
            }
        }
    }
    Ok(inputs)
}

fn print_outputs(outputs: &Outputs) {
    println!(
        "{}",
        serde_json::to_string_pretty(outputs).expect("outputs always serialize")
    );
}

fn cmd_run(
    file: &Path,
    defines: &[String],
    input_pairs: &[String],
    backends: Option<&Path>,
    trace_path: Option<&Path>,
) -> i32 {
    let bindings = match parse_defines(defines) {
        Ok(b) => b,
        Err(e) => return diagnostic(e),
    };
    let program = match load_program(file, &bindings) {
        Ok(p) => p,
        Err(e) => return diagnostic(e),
    };
    let inputs = match parse_inputs(input_pairs) {
        Ok(i) => i,
        Err(e) => return diagnostic(e),
    };
    let mut options = RunOptions {
        macros: bindings,
        ..RunOptions::default()
    };
    if let Some(path) = backends {
        options.backends = match BackendSet::from_config_file(path) {
            Ok(set) => set,
            Err(e) => return runtime_error(e),
        };
    }
    match run_program(&program, inputs, &options) {
        Ok(result) => {
            if let Some(path) = trace_path {
                if let Err(e) = std::fs::write(path, result.trace.to_json()) {
                    return runtime_error(format!("{}: {e}", path.display()));
                }
            }
            print_outputs(&result.outputs);
            0
        }
        Err(failure) => {
            // Flush the partial trace so the failed run stays inspectable.
            if let Some(path) = trace_path {
                let _ = std::fs::write(path, failure.partial_trace.to_json());
            }
            runtime_error(failure.error)
        }
    }
}

fn cmd_replay(file: &Path, trace_path: &Path) -> i32 {
    let text = match std::fs::read_to_string(trace_path) {
        Ok(t) => t,
        Err(e) => return runtime_error(format!("{}: {e}", trace_path.display())),
    };
    let trace = match TraceRecord::from_json(&text) {
        Ok(t) => t,
        Err(e) => return runtime_error(e),
    };
    let program = match load_program(file, &trace.macros) {
        Ok(p) => p,
        Err(e) => return diagnostic(e),
    };
    match replay_trace(&program, &trace) {
        Ok(outcome) => {
            print_outputs(&outcome.outputs);
            0
        }
        Err(e) => runtime_error(e),
    }
}
