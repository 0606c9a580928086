//! Structured documents: the output of one questionnaire execution.
//!
//! A document maps state names to entry sequences. Entries are text leaves
//! (with their format and a provenance flag) or nested documents for record
//! states. Rendering walks the schema in declaration order and is the exact
//! inverse of [`parse_rendered_document`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compile::pda::{Pda, Transition, ROOT};
use crate::compile::{terminal_prefix, CompiledPrompt};
use crate::lang::LeafAction;

use super::RunError;

/// A channel or input value: one text or a list of texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Text(String),
    List(Vec<String>),
}

impl Value {
    pub fn into_list(self) -> Vec<String> {
        match self {
            Value::Text(t) => vec![t],
            Value::List(l) => l,
        }
    }

    pub fn from_list(mut texts: Vec<String>) -> Self {
        if texts.len() == 1 {
            Value::Text(texts.remove(0))
        } else {
            Value::List(texts)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "seeded-by-channel")]
    Seeded,
    #[serde(rename = "generated")]
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Leaf {
        text: String,
        format: String,
        provenance: Provenance,
    },
    Record(Document),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Document(pub BTreeMap<String, Vec<Entry>>);

/// One level of a position inside nested documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub state: String,
    pub index: u32,
}

impl Document {
    pub fn new() -> Self {
        Document::default()
    }

    pub fn entries(&self, state: &str) -> &[Entry] {
        self.0.get(state).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Texts of a state's leaf entries, in order.
    pub fn leaf_texts(&self, state: &str) -> Vec<String> {
        self.entries(state)
            .iter()
            .filter_map(|e| match e {
                Entry::Leaf { text, .. } => Some(text.clone()),
                Entry::Record(_) => None,
            })
            .collect()
    }

    pub fn push_entry(&mut self, state: &str, entry: Entry) {
        self.0.entry(state.to_string()).or_default().push(entry);
    }

    /// Nested document at a path of record steps.
    pub fn record_at(&self, path: &[PathStep]) -> Option<&Document> {
        let mut doc = self;
        for step in path {
            match doc.entries(&step.state).get(step.index as usize - 1)? {
                Entry::Record(inner) => doc = inner,
                Entry::Leaf { .. } => return None,
            }
        }
        Some(doc)
    }

    pub fn record_at_mut(&mut self, path: &[PathStep]) -> Option<&mut Document> {
        let mut doc = self;
        for step in path {
            match doc
                .0
                .get_mut(&step.state)?
                .get_mut(step.index as usize - 1)?
            {
                Entry::Record(inner) => doc = inner,
                Entry::Leaf { .. } => return None,
            }
        }
        Some(doc)
    }

    /// Leaf text at a full path (records then the leaf step).
    pub fn leaf_text_at(&self, path: &[PathStep]) -> Option<&str> {
        let (last, records) = path.split_last()?;
        let doc = self.record_at(records)?;
        match doc.entries(&last.state).get(last.index as usize - 1)? {
            Entry::Leaf { text, .. } => Some(text),
            Entry::Record(_) => None,
        }
    }
}

/// Verify a document against its questionnaire schema: known states only,
/// entry counts within `[1, max]`, leaf/record shape and formats matching.
pub fn check_conformance(pda: &Pda, doc: &Document) -> Result<(), String> {
    check_level(pda, pda.node(ROOT).first_child, doc, "")
}

fn check_level(
    pda: &Pda,
    first: Option<usize>,
    doc: &Document,
    at: &str,
) -> Result<(), String> {
    let mut known = Vec::new();
    let mut next = first;
    while let Some(id) = next {
        let node = pda.node(id);
        known.push(node.name.as_str());
        let entries = doc.entries(&node.name);
        if entries.is_empty() || entries.len() > node.max_count as usize {
            return Err(format!(
                "{at}{}: {} entries, expected 1..={}",
                node.name,
                entries.len(),
                node.max_count
            ));
        }
        for (i, entry) in entries.iter().enumerate() {
            match (entry, node.is_record()) {
                (Entry::Record(inner), true) => {
                    let nested = format!("{at}{}[{}].", node.name, i + 1);
                    check_level(pda, node.first_child, inner, &nested)?;
                }
                (Entry::Leaf { format, .. }, false) => {
                    if *format != node.format {
                        return Err(format!(
                            "{at}{}[{}]: format `{format}`, declared `{}`",
                            node.name,
                            i + 1,
                            node.format
                        ));
                    }
                }
                (Entry::Record(_), false) => {
                    return Err(format!("{at}{}: record entry in a text state", node.name))
                }
                (Entry::Leaf { .. }, true) => {
                    return Err(format!("{at}{}: text entry in a record state", node.name))
                }
            }
        }
        next = node.successor;
    }
    for key in doc.0.keys() {
        if !known.contains(&key.as_str()) {
            return Err(format!("{at}{key}: not a state of this level"));
        }
    }
    Ok(())
}

/// Render the document's body text (everything after `start(record):`),
/// ending with the terminal line. The exact inverse of
/// [`parse_rendered_document`] for engine-produced documents.
pub fn render_body(prompt: &CompiledPrompt, doc: &Document, branch: Option<&str>) -> String {
    let mut out = String::new();
    render_level(&prompt.pda, prompt.pda.node(ROOT).first_child, doc, &mut out);
    match &prompt.decl.leaf.action {
        LeafAction::Next(_) => {
            out.push_str("exit(next):");
            if let Some(branch) = branch {
                out.push(' ');
                out.push_str(branch);
            }
            out.push('\n');
        }
        LeafAction::Exit(_) => out.push_str("exit(record):\n"),
    }
    out
}

fn render_level(pda: &Pda, first: Option<usize>, doc: &Document, out: &mut String) {
    let mut next = first;
    while let Some(id) = next {
        let node = pda.node(id);
        for (i, entry) in doc.entries(&node.name).iter().enumerate() {
            out.push_str(&pda.line_prefix(id, i as u32 + 1));
            match entry {
                Entry::Leaf { text, .. } => {
                    out.push(' ');
                    out.push_str(text);
                    out.push('\n');
                }
                Entry::Record(inner) => {
                    out.push('\n');
                    render_level(pda, node.first_child, inner, out);
                }
            }
        }
        next = node.successor;
    }
}

/// Parse a rendered body back into a document by walking the automaton. Every
/// line must match one of the admissible transitions at its position; the
/// terminal line yields the chosen branch for next-kind prompts.
pub fn parse_rendered_document(
    prompt: &CompiledPrompt,
    body: &str,
) -> Result<(Document, Option<String>), RunError> {
    let pda = &prompt.pda;
    let mut doc = Document::new();
    let mut stack: Vec<(usize, u32)> = Vec::new();
    let mut expected: Vec<Transition> = match pda.node(ROOT).first_child {
        Some(first) => vec![Transition::Enter {
            node: first,
            index: 1,
        }],
        None => vec![Transition::Terminal],
    };
    let mut lines = body.lines().enumerate();
    loop {
        let Some((line_idx, line)) = lines.next() else {
            return Err(RunError::NonConformantLine {
                line: body.lines().count() as u32 + 1,
                reason: "body ends before the terminal line".to_string(),
            });
        };
        let line_no = line_idx as u32 + 1;

        if expected.contains(&Transition::Terminal) {
            let prefix = terminal_prefix(&prompt.decl.leaf);
            if let Some(rest) = line.strip_prefix(prefix) {
                let branch = match &prompt.decl.leaf.action {
                    LeafAction::Next(branches) => {
                        let name = rest.strip_prefix(' ').unwrap_or(rest);
                        if !branches.iter().any(|b| b.prompt == name) {
                            return Err(RunError::NonConformantLine {
                                line: line_no,
                                reason: format!("`{name}` is not a branch of this prompt"),
                            });
                        }
                        Some(name.to_string())
                    }
                    LeafAction::Exit(_) => {
                        if !rest.trim().is_empty() {
                            return Err(RunError::NonConformantLine {
                                line: line_no,
                                reason: "content after the exit line".to_string(),
                            });
                        }
                        None
                    }
                };
                if lines.next().is_some() {
                    return Err(RunError::NonConformantLine {
                        line: line_no + 1,
                        reason: "content after the terminal line".to_string(),
                    });
                }
                return Ok((doc, branch));
            }
        }

        let mut matched = None;
        for transition in &expected {
            if let Transition::Enter { node, index } = transition {
                let prefix = pda.line_prefix(*node, *index);
                if line.starts_with(prefix.as_str()) {
                    matched = Some((*node, *index, prefix));
                    break;
                }
            }
        }
        let Some((node, index, prefix)) = matched else {
            let options: Vec<String> = expected
                .iter()
                .map(|t| match t {
                    Transition::Enter { node, index } => pda.line_prefix(*node, *index),
                    Transition::Terminal => terminal_prefix(&prompt.decl.leaf).to_string(),
                })
                .collect();
            return Err(RunError::NonConformantLine {
                line: line_no,
                reason: format!("`{line}` matches none of: {}", options.join(" | ")),
            });
        };

        let depth = pda.node(node).depth;
        stack.truncate(depth - 1);
        let parent_path: Vec<PathStep> = stack
            .iter()
            .map(|(n, i)| PathStep {
                state: pda.node(*n).name.clone(),
                index: *i,
            })
            .collect();
        stack.push((node, index));
        let rest = &line[prefix.len()..];
        let parent = doc
            .record_at_mut(&parent_path)
            .expect("parents were created in order");
        if pda.node(node).is_record() {
            if !rest.trim().is_empty() {
                return Err(RunError::NonConformantLine {
                    line: line_no,
                    reason: "content on a record line".to_string(),
                });
            }
            parent.push_entry(&pda.node(node).name, Entry::Record(Document::new()));
            expected = vec![Transition::Enter {
                node: pda.node(node).first_child.expect("records have children"),
                index: 1,
            }];
        } else {
            let text = rest.strip_prefix(' ').unwrap_or(rest);
            parent.push_entry(
                &pda.node(node).name,
                Entry::Leaf {
                    text: text.to_string(),
                    format: pda.node(node).format.clone(),
                    provenance: Provenance::Generated,
                },
            );
            expected = pda.candidates_after(&stack);
        }
    }
}
