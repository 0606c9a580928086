//! Prompt header rendering.
//!
//! A header is assembled from a template of named slots. Slot defaults can be
//! overridden by top-level `slot: value` lines in the program; `{mechanics}`
//! and `{formats}` are generated from the compiled prompt, `{automaton}` is
//! the entry purpose sentence and `{prompt}` the prompt's own purpose.

use thiserror::Error;

use super::formats::FormatRegistry;
use super::pda::Pda;
use crate::lang::{HeaderOverride, HeaderSlot, LeafDecl};

pub const DEFAULT_PREHAMBLE: &str = "You are a helpful AI assistant.";
pub const DEFAULT_BASICS: &str = "You are using an interactive questionnaire.";
pub const DEFAULT_MECHS: &str = "Follow this structure after the start prompt:";
pub const DEFAULT_FMTS: &str = "Each prompt expects one of the following text formats:";
pub const DEFAULT_POSTSCRIPTUM: &str =
    "Terminate each prompt with a newline. Use as many statement with \"thought\" format as needed.";
pub const DEFAULT_TEMPLATE: &str = "{prehamble}\n{automaton}\n{prompt}\n{basics}\n{mechs}\n```\n{mechanics}\n```\n{fmts}\n{formats}\n{postscriptum}\n\nstart(record):\n";

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: unknown template slot {{{slot}}}")]
pub struct UnknownTemplateSlot {
    pub slot: String,
    /// Source line of the `header:` override, 0 for the built-in template.
    pub line: u32,
}

/// The six configurable slots, after overrides.
#[derive(Debug, Clone)]
pub struct HeaderSlots {
    pub prehamble: String,
    pub postscriptum: String,
    pub basics: String,
    pub mechs: String,
    pub fmts: String,
    pub template: String,
    template_line: u32,
}

impl Default for HeaderSlots {
    fn default() -> Self {
        HeaderSlots {
            prehamble: DEFAULT_PREHAMBLE.to_string(),
            postscriptum: DEFAULT_POSTSCRIPTUM.to_string(),
            basics: DEFAULT_BASICS.to_string(),
            mechs: DEFAULT_MECHS.to_string(),
            fmts: DEFAULT_FMTS.to_string(),
            template: DEFAULT_TEMPLATE.to_string(),
            template_line: 0,
        }
    }
}

impl HeaderSlots {
    pub fn with_overrides(overrides: &[HeaderOverride]) -> Self {
        let mut slots = HeaderSlots::default();
        for o in overrides {
            match o.slot {
                HeaderSlot::Prehamble => slots.prehamble = o.value.clone(),
                HeaderSlot::Postscriptum => slots.postscriptum = o.value.clone(),
                HeaderSlot::Basics => slots.basics = o.value.clone(),
                HeaderSlot::Mechs => slots.mechs = o.value.clone(),
                HeaderSlot::Fmts => slots.fmts = o.value.clone(),
                HeaderSlot::Header => {
                    slots.template = o.value.clone();
                    slots.template_line = o.line;
                }
            }
        }
        slots
    }
}

/// One mechanics line per state in declaration order, with defaulted counts
/// and formats spelled out: `> problems[2](record): list all issues`.
pub fn render_mechanics(pda: &Pda) -> String {
    let mut lines = Vec::new();
    for id in pda.document_order() {
        let node = pda.node(id);
        let count = if node.max_count > 1 {
            format!("[{}]", node.max_count)
        } else {
            String::new()
        };
        let mut line = format!(
            "{}{}{}({}):",
            "> ".repeat(node.depth),
            node.name,
            count,
            node.format
        );
        if !node.annotation.is_empty() {
            line.push(' ');
            line.push_str(&node.annotation);
        }
        lines.push(line);
    }
    lines.join("\n")
}

/// Formats referenced by a prompt, in header order: `next` when the leaf
/// selects a branch, then state formats by first use in declaration order
/// (`record` appears exactly when some state nests).
pub fn used_formats(pda: &Pda, leaf: &LeafDecl) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if leaf.is_next() {
        out.push("next".to_string());
    }
    for id in pda.document_order() {
        let format = &pda.node(id).format;
        if !out.iter().any(|f| f == format) {
            out.push(format.clone());
        }
    }
    out
}

/// `- name: description` lines for every format used by the prompt. The
/// description of `next` is the leaf annotation.
pub fn render_formats_block(pda: &Pda, leaf: &LeafDecl, registry: &FormatRegistry) -> String {
    used_formats(pda, leaf)
        .into_iter()
        .map(|name| {
            let description = if name == "next" {
                leaf.annotation.clone()
            } else {
                registry
                    .get(&name)
                    .map(|spec| spec.description.clone())
                    .unwrap_or_default()
            };
            if description.is_empty() {
                format!("- {name}:")
            } else {
                format!("- {name}: {description}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render the full header for one prompt, byte for byte, ending with the
/// `start(record):` line and its newline.
pub fn render_header(
    slots: &HeaderSlots,
    entry_purpose: &str,
    prompt_purpose: &str,
    pda: &Pda,
    leaf: &LeafDecl,
    registry: &FormatRegistry,
) -> Result<String, UnknownTemplateSlot> {
    let template = &slots.template;
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        rest = &rest[open + 1..];
        let close = rest.find('}').ok_or_else(|| UnknownTemplateSlot {
            slot: rest.chars().take(16).collect(),
            line: slots.template_line,
        })?;
        let name = &rest[..close];
        let value = match name {
            "prehamble" => slots.prehamble.clone(),
            "postscriptum" => slots.postscriptum.clone(),
            "basics" => slots.basics.clone(),
            "mechs" => slots.mechs.clone(),
            "fmts" => slots.fmts.clone(),
            "automaton" => entry_purpose.to_string(),
            "prompt" => prompt_purpose.to_string(),
            "mechanics" => render_mechanics(pda),
            "formats" => render_formats_block(pda, leaf, registry),
            other => {
                return Err(UnknownTemplateSlot {
                    slot: other.to_string(),
                    line: slots.template_line,
                })
            }
        };
        out.push_str(&value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::pda::build_pda;
    use crate::lang::parse_program;

    const EDIT: &str = "\
entry(initial): Given a user question, you craft an answer
formats:
- sentence(text): one natural language sentence per line
prompt(edit): improve your answer iteratively
> question(text): user's question
> draft[2](sentence): your current answer
> problems[2]: list all issues in this answer
> > identify(sentence): one issue to address
> > consider[3](thought): solutions for that issue
> answer[2](sentence): write your corrected answer
> issues(thought): are there other issues left to edit?
__next(edit[2],submit): \"edit\" the issues or \"submit\" your answer
";

    fn edit_parts() -> (Pda, crate::lang::LeafDecl, FormatRegistry) {
        let ast = parse_program(EDIT).unwrap();
        let prompt = ast.prompt("edit").unwrap();
        let pda = build_pda(prompt);
        let mut registry = FormatRegistry::natives();
        registry.insert_user(&ast.formats[0]);
        (pda, prompt.leaf.clone(), registry)
    }

    #[test]
    fn mechanics_lines_match_declared_structure() {
        let (pda, _, _) = edit_parts();
        let mechanics = render_mechanics(&pda);
        let lines: Vec<&str> = mechanics.lines().collect();
        assert_eq!(lines[0], "> question(text): user's question");
        assert_eq!(lines[1], "> draft[2](sentence): your current answer");
        assert_eq!(lines[2], "> problems[2](record): list all issues in this answer");
        assert_eq!(lines[3], "> > identify(sentence): one issue to address");
        assert_eq!(lines[4], "> > consider[3](thought): solutions for that issue");
        assert_eq!(lines[5], "> answer[2](sentence): write your corrected answer");
        assert_eq!(lines[6], "> issues(thought): are there other issues left to edit?");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn formats_block_orders_next_then_first_use() {
        let (pda, leaf, registry) = edit_parts();
        assert_eq!(
            used_formats(&pda, &leaf),
            ["next", "text", "sentence", "record", "thought"]
        );
        let block = render_formats_block(&pda, &leaf, &registry);
        assert_eq!(
            block,
            "- next: \"edit\" the issues or \"submit\" your answer\n\
             - text: ASCII text in any form\n\
             - sentence: one natural language sentence per line\n\
             - record: start of a nested prompt\n\
             - thought: your thoughts (a few words per lines)"
        );
    }

    #[test]
    fn record_is_listed_only_when_a_state_nests() {
        let ast = parse_program(
            "entry(p): x\nprompt(p): y\n> a(text): t\n> b(thought): u\n> c(sentence): v\n__next(p):",
        )
        .unwrap();
        let prompt = ast.prompt("p").unwrap();
        let pda = build_pda(prompt);
        let mut registry = FormatRegistry::natives();
        registry.insert_user(&crate::lang::FormatDecl {
            name: "sentence".to_string(),
            parent: "text".to_string(),
            description: "s".to_string(),
            line: 0,
        });
        assert_eq!(
            used_formats(&pda, &prompt.leaf),
            ["next", "text", "thought", "sentence"]
        );
        let _ = &registry;
    }

    #[test]
    fn text_only_exit_prompt_lists_a_single_format_line() {
        let ast =
            parse_program("entry(p): x\nprompt(p): y\n> a(text): t\n> b(text): u\n__exit(a):")
                .unwrap();
        let prompt = ast.prompt("p").unwrap();
        let pda = build_pda(prompt);
        let registry = FormatRegistry::natives();
        assert_eq!(
            render_formats_block(&pda, &prompt.leaf, &registry),
            "- text: ASCII text in any form"
        );
    }

    #[test]
    fn header_renders_deterministically_with_defaults() {
        let (pda, leaf, registry) = edit_parts();
        let slots = HeaderSlots::default();
        let a = render_header(&slots, "entry purpose", "edit purpose", &pda, &leaf, &registry)
            .unwrap();
        let b = render_header(&slots, "entry purpose", "edit purpose", &pda, &leaf, &registry)
            .unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("You are a helpful AI assistant.\nentry purpose\nedit purpose\n"));
        assert!(a.ends_with("\n\nstart(record):\n"));
        assert!(a.contains("Each prompt expects one of the following text formats:\n"));
    }

    #[test]
    fn empty_entry_purpose_yields_empty_automaton_line() {
        let (pda, leaf, registry) = edit_parts();
        let slots = HeaderSlots::default();
        let text = render_header(&slots, "", "p", &pda, &leaf, &registry).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "You are a helpful AI assistant.");
        assert_eq!(lines[1], "");
        assert_eq!(lines[2], "p");
    }

    #[test]
    fn prehamble_override_replaces_first_line() {
        let (pda, leaf, registry) = edit_parts();
        let slots = HeaderSlots::with_overrides(&[HeaderOverride {
            slot: HeaderSlot::Prehamble,
            value: "X".to_string(),
            line: 1,
        }]);
        let text = render_header(&slots, "e", "p", &pda, &leaf, &registry).unwrap();
        assert!(text.starts_with("X\n"));
    }

    #[test]
    fn unknown_slot_in_user_template_is_an_error() {
        let (pda, leaf, registry) = edit_parts();
        let slots = HeaderSlots::with_overrides(&[HeaderOverride {
            slot: HeaderSlot::Header,
            value: "{prehamble}\n{bogus}\n".to_string(),
            line: 7,
        }]);
        let err = render_header(&slots, "e", "p", &pda, &leaf, &registry).unwrap_err();
        assert_eq!(err.slot, "bogus");
        assert_eq!(err.line, 7);
    }
}
