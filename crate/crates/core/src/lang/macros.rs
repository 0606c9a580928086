//! Macro expansion: `{name}` occurrences are substituted before parsing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value bound to a macro name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MacroValue {
    Int(i64),
    Str(String),
}

impl MacroValue {
    fn render(&self) -> String {
        match self {
            MacroValue::Int(v) => v.to_string(),
            MacroValue::Str(s) => s.clone(),
        }
    }
}

impl std::fmt::Display for MacroValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

pub type MacroBindings = BTreeMap<String, MacroValue>;

#[derive(Debug, Error, PartialEq)]
pub enum ExpandError {
    #[error("line {line}: macro {{{name}}} has no binding")]
    UnboundMacro { name: String, line: u32 },
}

/// Parse a `name=value` pair as used by CLI `--define` flags. Values that
/// parse as integers bind as integers, everything else binds as a string.
pub fn parse_define(arg: &str) -> Result<(String, MacroValue), String> {
    let (name, value) = arg
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{arg}`"))?;
    if name.is_empty() || !is_identifier(name) {
        return Err(format!("`{name}` is not a valid macro name"));
    }
    let value = match value.parse::<i64>() {
        Ok(v) => MacroValue::Int(v),
        Err(_) => MacroValue::Str(value.to_string()),
    };
    Ok((name.to_string(), value))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Substitute every `{name}` occurrence in `source` with its bound value.
///
/// Only `{identifier}` shapes are macros; any other use of braces passes
/// through untouched. There is no escaping and no evaluation inside braces.
pub fn expand_macros(source: &str, bindings: &MacroBindings) -> Result<String, ExpandError> {
    let mut out = String::with_capacity(source.len());
    let mut line = 1u32;
    let bytes = source.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '\n' {
            line += 1;
            out.push(c);
            i += 1;
            continue;
        }
        if c == '{' {
            if let Some((name, end)) = scan_macro_name(source, i) {
                match bindings.get(name) {
                    Some(value) => out.push_str(&value.render()),
                    None => {
                        return Err(ExpandError::UnboundMacro {
                            name: name.to_string(),
                            line,
                        })
                    }
                }
                i = end;
                continue;
            }
        }
        out.push(c);
        i += c.len_utf8();
    }
    Ok(out)
}

/// If `source[start..]` begins with `{identifier}`, return the identifier and
/// the byte offset just past the closing brace.
fn scan_macro_name(source: &str, start: usize) -> Option<(&str, usize)> {
    let rest = &source[start + 1..];
    let close = rest.find('}')?;
    let name = &rest[..close];
    if name.is_empty() || !is_identifier(name) {
        return None;
    }
    Some((name, start + 1 + close + 1))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::lang::parser::parse_program;
    use proptest::prelude::*;

    proptest! {
        /// Expansion is pure text substitution: expanding then parsing equals
        /// parsing a pre-substituted source.
        #[test]
        fn expansion_commutes_with_substitution(t in 1i64..9, n in 1i64..9, who in "[a-z]{1,8}") {
            let templated =
                "entry(p): ask {who}\nprompt(p): y\n> a[{T}](text): t\n> b[{N}](thought): u\n__exit(a):";
            let direct = format!(
                "entry(p): ask {who}\nprompt(p): y\n> a[{t}](text): t\n> b[{n}](thought): u\n__exit(a):"
            );
            let mut bindings = MacroBindings::new();
            bindings.insert("T".to_string(), MacroValue::Int(t));
            bindings.insert("N".to_string(), MacroValue::Int(n));
            bindings.insert("who".to_string(), MacroValue::Str(who));
            let expanded = expand_macros(templated, &bindings).unwrap();
            prop_assert_eq!(&expanded, &direct);
            let via_expansion = parse_program(&expanded).unwrap();
            let pre_substituted = parse_program(&direct).unwrap();
            prop_assert_eq!(via_expansion.normalized(), pre_substituted.normalized());
        }
    }
}
