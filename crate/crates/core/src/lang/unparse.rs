//! Canonical pretty-printer. `parse_program(unparse_program(ast))` yields a
//! structurally identical tree (source lines aside).

use super::ast::*;
use super::parser::escape;

pub fn unparse_program(ast: &ProgramAst) -> String {
    let mut out = String::new();
    push_head(&mut out, "entry", &ast.entry.prompt, &ast.entry.purpose);

    if !ast.header_overrides.is_empty() {
        out.push('\n');
        for o in &ast.header_overrides {
            out.push_str(o.slot.name());
            out.push(':');
            if !o.value.is_empty() {
                out.push(' ');
                out.push_str(&escape(&o.value));
            }
            out.push('\n');
        }
    }

    if !ast.formats.is_empty() {
        out.push_str("\nformats:\n");
        for f in &ast.formats {
            out.push_str(&format!("- {}({})", f.name, f.parent));
            push_annotation(&mut out, &f.description);
            out.push('\n');
        }
    }

    for p in &ast.prompts {
        out.push('\n');
        push_head(&mut out, "prompt", &p.name, &p.purpose);
        for c in &p.channels {
            out.push_str(&unparse_channel(c));
            out.push('\n');
        }
        for s in &p.states {
            push_state(&mut out, s, 1);
        }
        out.push_str(&unparse_leaf(&p.leaf));
        out.push('\n');
    }
    out
}

fn push_head(out: &mut String, keyword: &str, name: &str, purpose: &str) {
    out.push_str(keyword);
    out.push('(');
    out.push_str(name);
    out.push_str("):");
    if !purpose.is_empty() {
        out.push(' ');
        out.push_str(purpose);
    }
    out.push('\n');
}

fn push_annotation(out: &mut String, text: &str) {
    out.push(':');
    if !text.is_empty() {
        out.push(' ');
        out.push_str(text);
    }
}

pub(crate) fn unparse_channel(c: &ChannelDecl) -> String {
    let mut out = String::from("- ");
    match c.kind {
        ChannelKind::Target | ChannelKind::Append => {
            out.push_str(&format!("{}({})", c.kind.keyword(), c.target_state));
        }
        ChannelKind::Call => {
            out.push_str(&format!("target({})", c.target_state));
            if let Some(callee) = &c.callee {
                out.push_str(&format!(" call({callee})"));
            }
            for (name, value) in &c.kwargs {
                out.push_str(&format!(" kwargs({name}, {})", unparse_expression(value)));
            }
        }
    }
    if let Some(field) = &c.source_field {
        out.push_str(&format!(" source({field})"));
    }
    if !c.source_prompts.is_empty() {
        out.push_str(&format!(" prompt({})", c.source_prompts.join(",")));
    }
    if c.mapped {
        out.push_str(" mapped");
    }
    out
}

fn unparse_expression(e: &Expression) -> String {
    match e {
        Expression::Identifier(name) => name.clone(),
        Expression::IntLit(v) => v.to_string(),
        Expression::StringLit(s) => format!("\"{}\"", escape(s)),
    }
}

fn push_state(out: &mut String, s: &StateDecl, depth: usize) {
    out.push_str(&"> ".repeat(depth));
    out.push_str(&s.name);
    if s.max_count > 1 {
        out.push_str(&format!("[{}]", s.max_count));
    }
    if let Some(f) = &s.format {
        out.push_str(&format!("({f})"));
    }
    push_annotation(out, &s.annotation);
    out.push('\n');
    for child in &s.children {
        push_state(out, child, depth + 1);
    }
}

fn unparse_leaf(leaf: &LeafDecl) -> String {
    let mut out = String::from("__");
    match &leaf.action {
        LeafAction::Next(branches) => {
            let items: Vec<String> = branches
                .iter()
                .map(|b| match b.trip_limit {
                    Some(limit) => format!("{}[{limit}]", b.prompt),
                    None => b.prompt.clone(),
                })
                .collect();
            out.push_str(&format!("next({})", items.join(",")));
        }
        LeafAction::Exit(fields) => {
            out.push_str(&format!("exit({})", fields.join(",")));
        }
    }
    push_annotation(&mut out, &leaf.annotation);
    out
}
