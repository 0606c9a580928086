//! Format registry: native formats plus user declarations.
//!
//! Formats form a tree under an abstract root with three children: `text`,
//! `enum`, and `regex`. Only text-kind formats can ever be completed by a
//! language model; `enum` backs branch selection internally and `regex` is
//! declarable but rejected at validation.

use std::collections::BTreeMap;

use crate::lang::FormatDecl;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatKind {
    Text,
    Enum,
    Regex,
}

impl FormatKind {
    pub fn name(self) -> &'static str {
        match self {
            FormatKind::Text => "text",
            FormatKind::Enum => "enum",
            FormatKind::Regex => "regex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatSpec {
    pub name: String,
    pub kind: FormatKind,
    /// Parent format; `None` for the children of the abstract root.
    pub parent: Option<String>,
    pub description: String,
}

pub const TEXT_DESCRIPTION: &str = "ASCII text in any form";
pub const THOUGHT_DESCRIPTION: &str = "your thoughts (a few words per lines)";
pub const RECORD_DESCRIPTION: &str = "start of a nested prompt";

/// Names a user format may not re-declare.
pub const RESERVED_FORMAT_NAMES: &[&str] = &["text", "thought", "record", "next", "enum", "regex"];

#[derive(Debug, Clone)]
pub struct FormatRegistry {
    specs: BTreeMap<String, FormatSpec>,
}

impl FormatRegistry {
    /// Registry holding only the native formats.
    pub fn natives() -> Self {
        let mut specs = BTreeMap::new();
        let mut add = |name: &str, kind, parent: Option<&str>, description: &str| {
            specs.insert(
                name.to_string(),
                FormatSpec {
                    name: name.to_string(),
                    kind,
                    parent: parent.map(str::to_string),
                    description: description.to_string(),
                },
            );
        };
        add("text", FormatKind::Text, None, TEXT_DESCRIPTION);
        add(
            "thought",
            FormatKind::Text,
            Some("text"),
            THOUGHT_DESCRIPTION,
        );
        add(
            "record",
            FormatKind::Text,
            Some("text"),
            RECORD_DESCRIPTION,
        );
        // The description of `next` is per prompt (the leaf annotation).
        add("next", FormatKind::Enum, None, "");
        FormatRegistry { specs }
    }

    /// Add a user format. The caller has already checked the parent resolves;
    /// `enum`/`regex` as a parent name hangs the format off that root kind.
    pub fn insert_user(&mut self, decl: &FormatDecl) {
        let (kind, parent) = match decl.parent.as_str() {
            "enum" => (FormatKind::Enum, None),
            "regex" => (FormatKind::Regex, None),
            other => (
                self.specs
                    .get(other)
                    .map(|s| s.kind)
                    .unwrap_or(FormatKind::Text),
                Some(other.to_string()),
            ),
        };
        self.specs.insert(
            decl.name.clone(),
            FormatSpec {
                name: decl.name.clone(),
                kind,
                parent,
                description: decl.description.clone(),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&FormatSpec> {
        self.specs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.specs.contains_key(name)
    }

    /// `name` followed by its ancestors, root-child last. Used to resolve the
    /// nearest configured sampling/backend for a format.
    pub fn chain<'a>(&'a self, name: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut cur = Some(name);
        while let Some(n) = cur {
            out.push(n);
            cur = self.specs.get(n).and_then(|s| s.parent.as_deref());
        }
        out
    }
}
