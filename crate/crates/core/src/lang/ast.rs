//! Abstract syntax tree for STA programs.
//!
//! The tree mirrors the surface language: one entry declaration, optional
//! header-slot overrides, an optional `formats:` section, and a sequence of
//! prompts. Every declaration keeps the 1-based source line it came from so
//! later passes can report positioned diagnostics.

/// A whole program as parsed from `.sta` source.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramAst {
    pub entry: EntryDecl,
    pub header_overrides: Vec<HeaderOverride>,
    pub formats: Vec<FormatDecl>,
    pub prompts: Vec<PromptDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryDecl {
    /// Name of the prompt where execution starts.
    pub prompt: String,
    /// Natural-language purpose of the whole program.
    pub purpose: String,
    pub line: u32,
}

/// Override for one slot of the generated prompt header.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderOverride {
    pub slot: HeaderSlot,
    /// Unescaped value (`\n`, `\"` and `\\` sequences already decoded).
    pub value: String,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderSlot {
    Prehamble,
    Postscriptum,
    Basics,
    Mechs,
    Fmts,
    Header,
}

impl HeaderSlot {
    pub fn name(self) -> &'static str {
        match self {
            HeaderSlot::Prehamble => "prehamble",
            HeaderSlot::Postscriptum => "postscriptum",
            HeaderSlot::Basics => "basics",
            HeaderSlot::Mechs => "mechs",
            HeaderSlot::Fmts => "fmts",
            HeaderSlot::Header => "header",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "prehamble" => HeaderSlot::Prehamble,
            "postscriptum" => HeaderSlot::Postscriptum,
            "basics" => HeaderSlot::Basics,
            "mechs" => HeaderSlot::Mechs,
            "fmts" => HeaderSlot::Fmts,
            "header" => HeaderSlot::Header,
            _ => return None,
        })
    }
}

/// User format declaration, e.g. `- sentence(text): one sentence per line`.
///
/// Both `name(parent):` and `name[parent]:` surface forms parse to this.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatDecl {
    pub name: String,
    pub parent: String,
    pub description: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptDecl {
    pub name: String,
    pub purpose: String,
    pub channels: Vec<ChannelDecl>,
    /// Top-level states; nesting lives in `StateDecl::children`.
    pub states: Vec<StateDecl>,
    pub leaf: LeafDecl,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Copy into the target state, replacing any earlier seed.
    Target,
    /// Extend the target state's entries.
    Append,
    /// Invoke a registered callee and store its result in the target state.
    Call,
}

impl ChannelKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ChannelKind::Target => "target",
            ChannelKind::Append => "append",
            ChannelKind::Call => "call",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub kind: ChannelKind,
    /// Top-level state receiving the data.
    pub target_state: String,
    /// Field read from the source; defaults to `target_state` when absent.
    pub source_field: Option<String>,
    /// Candidate source prompts; empty means the program inputs.
    pub source_prompts: Vec<String>,
    /// Callee name, present exactly when `kind == Call`.
    pub callee: Option<String>,
    pub kwargs: Vec<(String, Expression)>,
    pub mapped: bool,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Identifier(String),
    StringLit(String),
    IntLit(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDecl {
    pub name: String,
    /// Upper bound on repetitions; always >= 1. `[n]` is printed only for n > 1.
    pub max_count: u32,
    /// Explicit format marker. `None` defaults to `record` when the state has
    /// children and `text` otherwise.
    pub format: Option<String>,
    pub annotation: String,
    pub children: Vec<StateDecl>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafDecl {
    pub action: LeafAction,
    pub annotation: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafAction {
    /// `__next(a, b[3])`: pick a successor prompt.
    Next(Vec<Branch>),
    /// `__exit(x, y)`: terminate the program exporting the named states.
    Exit(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub prompt: String,
    /// Visit cap written `name[limit]`; the branch goes dead once reached.
    pub trip_limit: Option<u32>,
}

impl LeafDecl {
    pub fn is_next(&self) -> bool {
        matches!(self.action, LeafAction::Next(_))
    }

    pub fn branches(&self) -> &[Branch] {
        match &self.action {
            LeafAction::Next(branches) => branches,
            LeafAction::Exit(_) => &[],
        }
    }

    pub fn exit_fields(&self) -> &[String] {
        match &self.action {
            LeafAction::Next(_) => &[],
            LeafAction::Exit(fields) => fields,
        }
    }
}

impl ProgramAst {
    pub fn prompt(&self, name: &str) -> Option<&PromptDecl> {
        self.prompts.iter().find(|p| p.name == name)
    }

    /// Copy with every source line zeroed, for structural comparison of trees
    /// that came from different layouts of the same program.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.entry.line = 0;
        for o in &mut out.header_overrides {
            o.line = 0;
        }
        for f in &mut out.formats {
            f.line = 0;
        }
        for p in &mut out.prompts {
            p.line = 0;
            for c in &mut p.channels {
                c.line = 0;
            }
            for s in &mut p.states {
                zero_state_lines(s);
            }
            p.leaf.line = 0;
        }
        out
    }
}

fn zero_state_lines(state: &mut StateDecl) {
    state.line = 0;
    for child in &mut state.children {
        zero_state_lines(child);
    }
}

impl StateDecl {
    /// Format after applying the defaulting rule.
    pub fn effective_format(&self) -> &str {
        match &self.format {
            Some(f) => f,
            None if !self.children.is_empty() => "record",
            None => "text",
        }
    }
}
