//! Line-oriented recursive-descent parser for STA source text.
//!
//! The language is strictly line based: every declaration fits on one line,
//! `> ` pairs encode questionnaire nesting, `- ` introduces itemized
//! declarations (formats and channels), and `__` starts a prompt leaf. Lines
//! whose first non-blank character is `#` and blank lines are skipped.

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}:{column}: expected {expected}\n  | {source_line}")]
    Syntax {
        line: u32,
        column: u32,
        expected: String,
        source_line: String,
    },
    #[error("line {line}: indentation jumps from depth {previous} to {depth}\n  | {source_line}")]
    Indentation {
        line: u32,
        previous: usize,
        depth: usize,
        source_line: String,
    },
}

impl ParseError {
    pub fn line(&self) -> u32 {
        match self {
            ParseError::Syntax { line, .. } | ParseError::Indentation { line, .. } => *line,
        }
    }
}

/// Parse macro-expanded STA source into an AST.
pub fn parse_program(source: &str) -> Result<ProgramAst, ParseError> {
    Parser::new(source).parse()
}

struct Parser<'a> {
    lines: Vec<(u32, &'a str)>,
    pos: usize,
}

/// Cursor over a single line with column tracking for diagnostics.
struct Cursor<'a> {
    line_no: u32,
    text: &'a str,
    byte: usize,
}

impl<'a> Cursor<'a> {
    fn new(line_no: u32, text: &'a str) -> Self {
        Cursor {
            line_no,
            text,
            byte: 0,
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.byte..]
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line_no,
            column: self.byte as u32 + 1,
            expected: expected.into(),
            source_line: self.text.to_string(),
        }
    }

    fn skip_spaces(&mut self) {
        let n = self.rest().len() - self.rest().trim_start_matches(' ').len();
        self.byte += n;
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.byte += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), ParseError> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.error(format!("`{lit}`")))
        }
    }

    fn identifier(&mut self) -> Result<String, ParseError> {
        let rest = self.rest();
        let mut len = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            len = i + c.len_utf8();
        }
        if len == 0 {
            return Err(self.error("an identifier"));
        }
        let ident = &rest[..len];
        self.byte += len;
        Ok(ident.to_string())
    }

    fn number(&mut self) -> Result<u32, ParseError> {
        let rest = self.rest();
        let len = rest.chars().take_while(|c| c.is_ascii_digit()).count();
        if len == 0 {
            return Err(self.error("a number"));
        }
        let value: u32 = rest[..len]
            .parse()
            .map_err(|_| self.error("a number that fits in 32 bits"))?;
        self.byte += len;
        Ok(value)
    }

    /// Rest of the line as an annotation: everything after the cursor,
    /// trimmed of surrounding whitespace.
    fn annotation(&mut self) -> String {
        let out = self.rest().trim().to_string();
        self.byte = self.text.len();
        out
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        self.skip_spaces();
        if self.rest().is_empty() {
            Ok(())
        } else {
            Err(self.error("end of line"))
        }
    }
}

/// What the parser is in the middle of.
enum Section {
    TopLevel,
    Formats,
    Prompt(PromptBuilder),
}

struct PromptBuilder {
    name: String,
    purpose: String,
    line: u32,
    channels: Vec<ChannelDecl>,
    /// Stack of (depth, state) used to fold the indentation tree.
    roots: Vec<StateDecl>,
    stack: Vec<(usize, StateDecl)>,
    saw_state: bool,
}

impl PromptBuilder {
    fn new(name: String, purpose: String, line: u32) -> Self {
        PromptBuilder {
            name,
            purpose,
            line,
            channels: Vec::new(),
            roots: Vec::new(),
            stack: Vec::new(),
            saw_state: false,
        }
    }

    fn current_depth(&self) -> usize {
        self.stack.last().map(|(d, _)| *d).unwrap_or(0)
    }

    fn close_to_depth(&mut self, depth: usize) {
        while let Some((d, state)) = self.stack.pop() {
            if d < depth {
                self.stack.push((d, state));
                break;
            }
            match self.stack.last_mut() {
                Some((_, parent)) => parent.children.push(state),
                None => self.roots.push(state),
            }
        }
    }

    fn push_state(&mut self, depth: usize, state: StateDecl) {
        self.close_to_depth(depth);
        self.stack.push((depth, state));
        self.saw_state = true;
    }

    fn finish(mut self, leaf: LeafDecl) -> PromptDecl {
        self.close_to_depth(1);
        debug_assert!(self.stack.is_empty());
        PromptDecl {
            name: self.name,
            purpose: self.purpose,
            channels: self.channels,
            states: self.roots,
            leaf,
            line: self.line,
        }
    }
}

impl<'a> Parser<'a> {
    fn new(source: &'a str) -> Self {
        let lines = source
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .enumerate()
            .map(|(i, l)| (i as u32 + 1, l))
            .filter(|(_, l)| {
                let t = l.trim_start();
                !t.is_empty() && !t.starts_with('#')
            })
            .collect();
        Parser { lines, pos: 0 }
    }

    fn parse(mut self) -> Result<ProgramAst, ParseError> {
        let mut entry: Option<EntryDecl> = None;
        let mut overrides: Vec<HeaderOverride> = Vec::new();
        let mut formats: Vec<FormatDecl> = Vec::new();
        let mut saw_formats_section = false;
        let mut prompts: Vec<PromptDecl> = Vec::new();
        let mut section = Section::TopLevel;

        while self.pos < self.lines.len() {
            let (line_no, raw) = self.lines[self.pos];
            self.pos += 1;
            let mut cur = Cursor::new(line_no, raw);

            // Itemized and indented lines belong to the open section.
            if raw.starts_with("- ") {
                cur.expect("- ")?;
                match &mut section {
                    Section::Formats => formats.push(parse_format_decl(&mut cur)?),
                    Section::Prompt(builder) => {
                        if builder.saw_state {
                            return Err(cur.error("states (channels must precede states)"));
                        }
                        builder.channels.push(parse_channel(&mut cur)?);
                    }
                    Section::TopLevel => {
                        return Err(cur.error("a `formats:` section or prompt before `- ` items"))
                    }
                }
                continue;
            }
            if raw.starts_with("> ") {
                match &mut section {
                    Section::Prompt(builder) => {
                        let (depth, state) = parse_state_line(&mut cur)?;
                        let previous = builder.current_depth();
                        if depth > previous + 1 {
                            return Err(ParseError::Indentation {
                                line: line_no,
                                previous,
                                depth,
                                source_line: raw.to_string(),
                            });
                        }
                        builder.push_state(depth, state);
                    }
                    _ => return Err(cur.error("a prompt before `> ` states")),
                }
                continue;
            }
            if raw.starts_with("__") {
                let Section::Prompt(builder) = std::mem::replace(&mut section, Section::TopLevel)
                else {
                    return Err(cur.error("a prompt before a `__next`/`__exit` leaf"));
                };
                let leaf = parse_leaf(&mut cur)?;
                prompts.push(builder.finish(leaf));
                continue;
            }

            // Keyword lines close whatever section was open. A prompt must
            // have been terminated by its leaf first.
            if let Section::Prompt(builder) = &section {
                return Err(ParseError::Syntax {
                    line: line_no,
                    column: 1,
                    expected: format!("`__next`/`__exit` leaf for prompt `{}`", builder.name),
                    source_line: raw.to_string(),
                });
            }

            if raw.starts_with("entry(") {
                if entry.is_some() {
                    return Err(cur.error("only one entry declaration"));
                }
                if !prompts.is_empty() {
                    return Err(cur.error("the entry declaration before any prompt"));
                }
                cur.expect("entry(")?;
                let prompt = cur.identifier()?;
                cur.expect(")")?;
                cur.expect(":")?;
                let purpose = cur.annotation();
                entry = Some(EntryDecl {
                    prompt,
                    purpose,
                    line: line_no,
                });
                section = Section::TopLevel;
                continue;
            }
            if raw == "formats:" || raw.starts_with("formats:") {
                cur.expect("formats:")?;
                cur.expect_end()?;
                if saw_formats_section {
                    return Err(cur.error("at most one formats section"));
                }
                if !prompts.is_empty() {
                    return Err(cur.error("the formats section before any prompt"));
                }
                saw_formats_section = true;
                section = Section::Formats;
                continue;
            }
            if raw.starts_with("prompt(") {
                if entry.is_none() {
                    return Err(cur.error("the entry declaration before any prompt"));
                }
                cur.expect("prompt(")?;
                let name = cur.identifier()?;
                cur.expect(")")?;
                cur.expect(":")?;
                let purpose = cur.annotation();
                section = Section::Prompt(PromptBuilder::new(name, purpose, line_no));
                continue;
            }

            // Remaining shape: a header-slot override `slot: value`.
            let save = cur.byte;
            if let Ok(word) = cur.identifier() {
                if cur.eat(":") {
                    match HeaderSlot::from_name(&word) {
                        Some(slot) => {
                            if overrides.iter().any(|o| o.slot == slot) {
                                return Err(ParseError::Syntax {
                                    line: line_no,
                                    column: 1,
                                    expected: format!("at most one `{word}:` override"),
                                    source_line: raw.to_string(),
                                });
                            }
                            let value = parse_override_value(&mut cur);
                            overrides.push(HeaderOverride {
                                slot,
                                value,
                                line: line_no,
                            });
                            section = Section::TopLevel;
                            continue;
                        }
                        None => {
                            return Err(ParseError::Syntax {
                                line: line_no,
                                column: 1,
                                expected: "a header slot (prehamble, postscriptum, basics, \
                                           mechs, fmts, header)"
                                    .to_string(),
                                source_line: raw.to_string(),
                            });
                        }
                    }
                }
            }
            cur.byte = save;
            return Err(cur.error("a declaration (entry, formats, prompt, or slot override)"));
        }

        if let Section::Prompt(builder) = section {
            let last = self.lines.last().map(|(n, _)| *n).unwrap_or(0);
            return Err(ParseError::Syntax {
                line: last,
                column: 1,
                expected: format!("`__next`/`__exit` leaf for prompt `{}`", builder.name),
                source_line: String::new(),
            });
        }
        let entry = entry.ok_or(ParseError::Syntax {
            line: 1,
            column: 1,
            expected: "an entry declaration".to_string(),
            source_line: String::new(),
        })?;
        Ok(ProgramAst {
            entry,
            header_overrides: overrides,
            formats,
            prompts,
        })
    }
}

/// Value of a `slot: text` override. One space after the colon is the
/// separator; the remainder is kept verbatim (minus trailing blanks) and
/// `\n`, `\"`, `\\` escapes are decoded.
fn parse_override_value(cur: &mut Cursor) -> String {
    let mut raw = cur.rest();
    cur.byte = cur.text.len();
    if let Some(stripped) = raw.strip_prefix(' ') {
        raw = stripped;
    }
    unescape(raw.trim_end())
}

pub(crate) fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            other => out.push(other),
        }
    }
    out
}

/// `name(parent): description` or `name[parent]: description`.
fn parse_format_decl(cur: &mut Cursor) -> Result<FormatDecl, ParseError> {
    let name = cur.identifier()?;
    let parent = if cur.eat("(") {
        let p = cur.identifier()?;
        cur.expect(")")?;
        p
    } else if cur.eat("[") {
        let p = cur.identifier()?;
        cur.expect("]")?;
        p
    } else {
        return Err(cur.error("`(parent)` or `[parent]` after the format name"));
    };
    cur.expect(":")?;
    let description = cur.annotation();
    Ok(FormatDecl {
        name,
        parent,
        description,
        line: cur.line_no,
    })
}

/// One channel line after the leading `- `.
fn parse_channel(cur: &mut Cursor) -> Result<ChannelDecl, ParseError> {
    let line = cur.line_no;
    let mut target: Option<(ChannelKind, String)> = None;
    let mut callee: Option<String> = None;
    let mut source_field: Option<String> = None;
    let mut source_prompts: Vec<String> = Vec::new();
    let mut kwargs: Vec<(String, Expression)> = Vec::new();
    let mut mapped = false;

    loop {
        cur.skip_spaces();
        if cur.rest().is_empty() {
            break;
        }
        let at = cur.byte;
        let word = cur.identifier()?;
        match word.as_str() {
            "target" | "append" => {
                let kind = if word == "target" {
                    ChannelKind::Target
                } else {
                    ChannelKind::Append
                };
                cur.expect("(")?;
                let state = cur.identifier()?;
                cur.expect(")")?;
                if target.is_some() {
                    cur.byte = at;
                    return Err(cur.error("a single target(...)/append(...) clause"));
                }
                target = Some((kind, state));
            }
            "call" => {
                cur.expect("(")?;
                let name = cur.identifier()?;
                cur.expect(")")?;
                if callee.is_some() {
                    cur.byte = at;
                    return Err(cur.error("a single call(...) clause"));
                }
                callee = Some(name);
            }
            "source" | "from" => {
                cur.expect("(")?;
                let field = cur.identifier()?;
                cur.expect(")")?;
                if source_field.is_some() {
                    cur.byte = at;
                    return Err(cur.error("a single source(...)/from(...) clause"));
                }
                source_field = Some(field);
            }
            "prompt" => {
                cur.expect("(")?;
                if !source_prompts.is_empty() {
                    cur.byte = at;
                    return Err(cur.error("a single prompt(...) clause"));
                }
                loop {
                    source_prompts.push(cur.identifier()?);
                    if !cur.eat(",") {
                        break;
                    }
                    cur.skip_spaces();
                }
                cur.expect(")")?;
            }
            "kwargs" => {
                cur.expect("(")?;
                let name = cur.identifier()?;
                cur.expect(",")?;
                cur.skip_spaces();
                let value = parse_expression(cur)?;
                cur.expect(")")?;
                kwargs.push((name, value));
            }
            "mapped" => {
                mapped = true;
                cur.skip_spaces();
                if !cur.rest().is_empty() {
                    return Err(cur.error("end of line (`mapped` closes the channel)"));
                }
                break;
            }
            _ => {
                cur.byte = at;
                return Err(cur.error(
                    "a channel clause (target, append, call, source, from, prompt, \
                     kwargs, mapped)",
                ));
            }
        }
    }

    let (mut kind, target_state) = match target {
        Some(pair) => pair,
        None => return Err(cur.error("a target(...) or append(...) destination")),
    };
    if callee.is_some() {
        if kind == ChannelKind::Append {
            return Err(cur.error("target(...) with call(...) (append cannot take a call)"));
        }
        kind = ChannelKind::Call;
    } else if !kwargs.is_empty() {
        return Err(cur.error("a call(...) clause to go with kwargs(...)"));
    }
    if mapped && kind == ChannelKind::Append {
        return Err(cur.error("no `mapped` on append channels (only copy and call map)"));
    }
    Ok(ChannelDecl {
        kind,
        target_state,
        source_field,
        source_prompts,
        callee,
        kwargs,
        mapped,
        line,
    })
}

fn parse_expression(cur: &mut Cursor) -> Result<Expression, ParseError> {
    if cur.rest().starts_with('"') {
        cur.eat("\"");
        let mut out = String::new();
        let mut chars = cur.rest().char_indices();
        loop {
            match chars.next() {
                Some((i, '"')) => {
                    cur.byte += i + 1;
                    return Ok(Expression::StringLit(out));
                }
                Some((_, '\\')) => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, c)) => out.push(c),
                    None => break,
                },
                Some((_, c)) => out.push(c),
                None => break,
            }
        }
        return Err(cur.error("a closing `\"`"));
    }
    let negative = cur.rest().starts_with('-');
    if negative || cur.rest().starts_with(|c: char| c.is_ascii_digit()) {
        if negative {
            cur.eat("-");
        }
        let n = cur.number()? as i64;
        return Ok(Expression::IntLit(if negative { -n } else { n }));
    }
    Ok(Expression::Identifier(cur.identifier()?))
}

/// `> > name[count](format): annotation` — returns (depth, state).
fn parse_state_line(cur: &mut Cursor) -> Result<(usize, StateDecl), ParseError> {
    let mut depth = 0;
    while cur.eat("> ") {
        depth += 1;
    }
    let line = cur.line_no;
    let name = cur.identifier()?;
    let max_count = if cur.eat("[") {
        let n = cur.number()?;
        cur.expect("]")?;
        if n == 0 {
            return Err(cur.error("a count of at least 1"));
        }
        n
    } else {
        1
    };
    let format = if cur.eat("(") {
        let f = cur.identifier()?;
        cur.expect(")")?;
        Some(f)
    } else {
        None
    };
    cur.expect(":")?;
    let annotation = cur.annotation();
    Ok((
        depth,
        StateDecl {
            name,
            max_count,
            format,
            annotation,
            children: Vec::new(),
            line,
        },
    ))
}

/// `__next(a[2],b): note` or `__exit(x,y): note`.
fn parse_leaf(cur: &mut Cursor) -> Result<LeafDecl, ParseError> {
    let line = cur.line_no;
    cur.expect("__")?;
    let word = cur.identifier()?;
    let action = match word.as_str() {
        "next" => {
            cur.expect("(")?;
            let mut branches = Vec::new();
            loop {
                let prompt = cur.identifier()?;
                let trip_limit = if cur.eat("[") {
                    let n = cur.number()?;
                    cur.expect("]")?;
                    if n == 0 {
                        return Err(cur.error("a trip limit of at least 1"));
                    }
                    Some(n)
                } else {
                    None
                };
                branches.push(Branch { prompt, trip_limit });
                if !cur.eat(",") {
                    break;
                }
                cur.skip_spaces();
            }
            cur.expect(")")?;
            LeafAction::Next(branches)
        }
        "exit" => {
            cur.expect("(")?;
            let mut fields = Vec::new();
            loop {
                fields.push(cur.identifier()?);
                if !cur.eat(",") {
                    break;
                }
                cur.skip_spaces();
            }
            cur.expect(")")?;
            LeafAction::Exit(fields)
        }
        _ => {
            cur.byte -= word.len();
            return Err(cur.error("`next(...)` or `exit(...)` after `__`"));
        }
    };
    let annotation = if cur.eat(":") {
        cur.annotation()
    } else {
        cur.expect_end()?;
        String::new()
    };
    Ok(LeafDecl {
        action,
        annotation,
        line,
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    const VALID: &str = "\
entry(initial): Given a user question, you craft an answer

formats:
- sentence(text): one natural language sentence per line

prompt(initial): formulate your initial answer
- target(question)
> question(text): user's question
> ponder[3](thought): you think about an answer
> answer[2](sentence): your initial answer
__next(edit):

prompt(edit): improve your answer iteratively
- target(draft) source(answer) prompt(initial,edit) mapped
> draft[2](sentence): your current answer
__exit(draft):
";

    proptest! {
        /// Arbitrary input must produce a parse tree or a positioned error,
        /// never a panic.
        #[test]
        fn parse_never_panics_on_arbitrary_text(input in "\\PC{0,256}") {
            let _ = parse_program(&input);
        }

        /// Truncating a valid program anywhere must not panic either.
        #[test]
        fn parse_never_panics_on_truncation(frac in 0.0f64..1.0) {
            let cut = (VALID.len() as f64 * frac) as usize;
            let cut = (0..=cut).rev().find(|&i| VALID.is_char_boundary(i)).unwrap();
            let _ = parse_program(&VALID[..cut]);
        }

        /// Line mutations may change the outcome but never the total
        /// behavior: every error is positioned within the source.
        #[test]
        fn errors_carry_positions_inside_the_source(line in 0usize..14, junk in "[a-z( ):>_-]{0,18}") {
            let mut lines: Vec<&str> = VALID.lines().collect();
            lines[line] = &junk;
            let mutated = lines.join("\n");
            if let Err(e) = parse_program(&mutated) {
                let line_no = e.line() as usize;
                prop_assert!(line_no >= 1 && line_no <= lines.len());
            }
        }
    }
}
