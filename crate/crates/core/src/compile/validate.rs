//! Semantic analysis: name resolution over prompts, states, formats, and
//! channels, plus automaton construction and header rendering per prompt.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::formats::{FormatKind, FormatRegistry, RESERVED_FORMAT_NAMES};
use super::header::{render_header, HeaderSlots, UnknownTemplateSlot};
use super::pda::{build_pda, Pda};
use crate::lang::{unparse_program, Branch, ChannelKind, ProgramAst, PromptDecl};

#[derive(Debug, Error, PartialEq)]
pub enum ValidateError {
    #[error("line {line}: unknown prompt `{name}`")]
    UnknownPrompt { name: String, line: u32 },
    #[error("line {line}: `{prompt}` has no top-level state `{name}`")]
    UnknownState {
        name: String,
        prompt: String,
        line: u32,
    },
    #[error("line {line}: unknown format `{name}`")]
    UnknownFormat { name: String, line: u32 },
    #[error("line {line}: format `{name}` is {kind}-kind, which cannot be sampled")]
    UnsupportedFormatKind {
        name: String,
        kind: &'static str,
        line: u32,
    },
    #[error("line {line}: duplicate name `{name}`")]
    DuplicateName { name: String, line: u32 },
    #[error("line {line}: state `{name}` {problem}")]
    InvalidState {
        name: String,
        problem: String,
        line: u32,
    },
    #[error("line {line}: channel is invalid: {problem}")]
    InvalidChannel { problem: String, line: u32 },
    #[error(transparent)]
    TemplateSlot(#[from] UnknownTemplateSlot),
}

impl ValidateError {
    pub fn line(&self) -> u32 {
        match self {
            ValidateError::UnknownPrompt { line, .. }
            | ValidateError::UnknownState { line, .. }
            | ValidateError::UnknownFormat { line, .. }
            | ValidateError::UnsupportedFormatKind { line, .. }
            | ValidateError::DuplicateName { line, .. }
            | ValidateError::InvalidState { line, .. }
            | ValidateError::InvalidChannel { line, .. } => *line,
            ValidateError::TemplateSlot(e) => e.line,
        }
    }
}

/// A validated prompt with its automaton and pre-rendered header.
#[derive(Debug, Clone)]
pub struct CompiledPrompt {
    pub decl: PromptDecl,
    pub pda: Pda,
    pub header_text: String,
    /// Leaf branches; empty for exit-kind prompts.
    pub successors: Vec<Branch>,
    pub used_formats: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub entry: String,
    pub formats: FormatRegistry,
    pub slots: HeaderSlots,
    prompts: Vec<CompiledPrompt>,
    index: BTreeMap<String, usize>,
    /// SHA-256 of the canonical source, hex-encoded. Identifies the program
    /// in traces.
    pub program_hash: String,
}

impl CompiledProgram {
    pub fn prompt(&self, name: &str) -> Option<&CompiledPrompt> {
        self.index.get(name).map(|&i| &self.prompts[i])
    }

    /// Prompts in declaration order.
    pub fn prompts(&self) -> &[CompiledPrompt] {
        &self.prompts
    }

    pub fn entry_prompt(&self) -> &CompiledPrompt {
        self.prompt(&self.entry).expect("validated entry")
    }
}

/// Resolve every name in the AST and compile each prompt.
pub fn validate(ast: &ProgramAst) -> Result<CompiledProgram, ValidateError> {
    let mut formats = FormatRegistry::natives();
    for decl in &ast.formats {
        if RESERVED_FORMAT_NAMES.contains(&decl.name.as_str()) || formats.contains(&decl.name) {
            return Err(ValidateError::DuplicateName {
                name: decl.name.clone(),
                line: decl.line,
            });
        }
        if !formats.contains(&decl.parent)
            && decl.parent != "enum"
            && decl.parent != "regex"
        {
            return Err(ValidateError::UnknownFormat {
                name: decl.parent.clone(),
                line: decl.line,
            });
        }
        formats.insert_user(decl);
        let spec = formats.get(&decl.name).expect("just inserted");
        if spec.kind != FormatKind::Text {
            return Err(ValidateError::UnsupportedFormatKind {
                name: decl.name.clone(),
                kind: spec.kind.name(),
                line: decl.line,
            });
        }
    }

    let mut prompt_names = BTreeSet::new();
    for prompt in &ast.prompts {
        if !prompt_names.insert(prompt.name.as_str()) {
            return Err(ValidateError::DuplicateName {
                name: prompt.name.clone(),
                line: prompt.line,
            });
        }
    }
    if !prompt_names.contains(ast.entry.prompt.as_str()) {
        return Err(ValidateError::UnknownPrompt {
            name: ast.entry.prompt.clone(),
            line: ast.entry.line,
        });
    }

    let slots = HeaderSlots::with_overrides(&ast.header_overrides);
    let mut prompts = Vec::new();
    let mut index = BTreeMap::new();
    for prompt in &ast.prompts {
        check_states(&prompt.states, &formats)?;
        let pda = build_pda(prompt);
        check_channels(prompt, ast, &pda)?;
        check_leaf(prompt, &prompt_names, &pda)?;
        let header_text = render_header(
            &slots,
            &ast.entry.purpose,
            &prompt.purpose,
            &pda,
            &prompt.leaf,
            &formats,
        )?;
        let used_formats = super::header::used_formats(&pda, &prompt.leaf);
        index.insert(prompt.name.clone(), prompts.len());
        prompts.push(CompiledPrompt {
            decl: prompt.clone(),
            pda,
            header_text,
            successors: prompt.leaf.branches().to_vec(),
            used_formats,
        });
    }

    let program_hash = hex::encode(Sha256::digest(unparse_program(ast).as_bytes()));
    Ok(CompiledProgram {
        entry: ast.entry.prompt.clone(),
        formats,
        slots,
        prompts,
        index,
        program_hash,
    })
}

fn check_states(
    states: &[crate::lang::StateDecl],
    formats: &FormatRegistry,
) -> Result<(), ValidateError> {
    let mut seen = BTreeSet::new();
    for state in states {
        if !seen.insert(state.name.as_str()) {
            return Err(ValidateError::DuplicateName {
                name: state.name.clone(),
                line: state.line,
            });
        }
        if let Some(format) = &state.format {
            let spec = formats.get(format).ok_or_else(|| ValidateError::UnknownFormat {
                name: format.clone(),
                line: state.line,
            })?;
            if spec.kind != FormatKind::Text {
                return Err(ValidateError::UnsupportedFormatKind {
                    name: format.clone(),
                    kind: spec.kind.name(),
                    line: state.line,
                });
            }
            if !state.children.is_empty() && format != "record" {
                return Err(ValidateError::InvalidState {
                    name: state.name.clone(),
                    problem: format!("has children but format `{format}` (must be record)"),
                    line: state.line,
                });
            }
            if state.children.is_empty() && format == "record" {
                return Err(ValidateError::InvalidState {
                    name: state.name.clone(),
                    problem: "is declared record but has no children".to_string(),
                    line: state.line,
                });
            }
        }
        check_states(&state.children, formats)?;
    }
    Ok(())
}

fn check_channels(
    prompt: &PromptDecl,
    ast: &ProgramAst,
    pda: &Pda,
) -> Result<(), ValidateError> {
    for channel in &prompt.channels {
        let target = pda.find_top_level(&channel.target_state).ok_or_else(|| {
            ValidateError::UnknownState {
                name: channel.target_state.clone(),
                prompt: prompt.name.clone(),
                line: channel.line,
            }
        })?;
        if pda.node(target).is_record() {
            return Err(ValidateError::InvalidChannel {
                problem: format!(
                    "target `{}` is a record state; channels move text",
                    channel.target_state
                ),
                line: channel.line,
            });
        }
        let field = channel
            .source_field
            .as_deref()
            .unwrap_or(&channel.target_state);
        for source in &channel.source_prompts {
            let source_prompt = ast.prompt(source).ok_or_else(|| ValidateError::UnknownPrompt {
                name: source.clone(),
                line: channel.line,
            })?;
            let source_pda = build_pda(source_prompt);
            let node = source_pda.find_top_level(field).ok_or_else(|| {
                ValidateError::UnknownState {
                    name: field.to_string(),
                    prompt: source.clone(),
                    line: channel.line,
                }
            })?;
            if source_pda.node(node).is_record() {
                return Err(ValidateError::InvalidChannel {
                    problem: format!("source `{field}` of `{source}` is a record state"),
                    line: channel.line,
                });
            }
        }
        debug_assert!(
            (channel.kind == ChannelKind::Call) == channel.callee.is_some(),
            "parser keeps kind and callee in sync"
        );
    }
    Ok(())
}

fn check_leaf(
    prompt: &PromptDecl,
    prompt_names: &BTreeSet<&str>,
    pda: &Pda,
) -> Result<(), ValidateError> {
    for branch in prompt.leaf.branches() {
        if !prompt_names.contains(branch.prompt.as_str()) {
            return Err(ValidateError::UnknownPrompt {
                name: branch.prompt.clone(),
                line: prompt.leaf.line,
            });
        }
    }
    for field in prompt.leaf.exit_fields() {
        if pda.find_top_level(field).is_none() {
            return Err(ValidateError::UnknownState {
                name: field.clone(),
                prompt: prompt.name.clone(),
                line: prompt.leaf.line,
            });
        }
    }
    Ok(())
}
