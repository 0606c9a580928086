//! Channel execution support: callable components and seed construction.
//!
//! Copy and append channels run first in declaration order, then call
//! channels, so dataflow never observes call results from the same prompt
//! entry. Mapped channels fan the questionnaire out: each mapped channel
//! contributes one axis and instances are the cross product in declaration
//! order (earlier channels vary slowest).

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::compile::CompiledPrompt;
use crate::lang::{ChannelDecl, ChannelKind};

use super::document::{Document, Entry, Provenance, Value};
use super::trace::ChannelData;
use super::RunError;

/// A callable component addressable from call channels: other programs,
/// stores, or external tools. Implementations may block; the engine waits.
pub trait Callee: Send + Sync {
    fn call(&self, kwargs: &BTreeMap<String, Value>) -> Result<Value, String>;
}

#[derive(Default, Clone)]
pub struct CalleeRegistry {
    map: BTreeMap<String, Arc<dyn Callee>>,
}

impl CalleeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, callee: Arc<dyn Callee>) {
        self.map.insert(name.to_string(), callee);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Callee>> {
        self.map.get(name)
    }

    /// Registry with the built-in `identity` callee.
    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        registry.register("identity", Arc::new(IdentityCallee));
        registry
    }
}

/// Returns its single keyword argument unchanged.
pub struct IdentityCallee;

impl Callee for IdentityCallee {
    fn call(&self, kwargs: &BTreeMap<String, Value>) -> Result<Value, String> {
        let mut values = kwargs.values();
        match (values.next(), values.next()) {
            (Some(v), None) => Ok(v.clone()),
            _ => Err(format!("identity takes exactly one kwarg, got {}", kwargs.len())),
        }
    }
}

/// Build the seed documents for one prompt entry from the per-channel
/// resolved data. Pure: live execution and replay share it.
pub fn build_seeds(
    prompt: &CompiledPrompt,
    channels: &[(&ChannelDecl, &ChannelData)],
) -> Result<Vec<Document>, RunError> {
    let mut base = Document::new();
    // Axes in declaration order; each element is the entry list of one
    // instance of the target state.
    let mut axes: Vec<(String, Vec<Vec<String>>)> = Vec::new();

    for (decl, data) in channels {
        match data {
            ChannelData::Values(values) => {
                check_seed_texts(values)?;
                if decl.mapped {
                    if values.is_empty() {
                        return Err(RunError::InvalidChannelValue {
                            reason: format!(
                                "mapped channel to `{}` has an empty source",
                                decl.target_state
                            ),
                        });
                    }
                    axes.push((
                        decl.target_state.clone(),
                        values.iter().map(|v| vec![v.clone()]).collect(),
                    ));
                } else {
                    match decl.kind {
                        ChannelKind::Target => {
                            seed_set(prompt, &mut base, &decl.target_state, values)?
                        }
                        ChannelKind::Append => {
                            seed_extend(prompt, &mut base, &decl.target_state, values)?
                        }
                        ChannelKind::Call => unreachable!("calls carry ChannelData::Calls"),
                    }
                }
            }
            ChannelData::Calls(results) => {
                for result in results {
                    check_seed_texts(result)?;
                }
                if decl.mapped {
                    if results.is_empty() {
                        return Err(RunError::InvalidChannelValue {
                            reason: format!(
                                "mapped call to `{}` has an empty source",
                                decl.target_state
                            ),
                        });
                    }
                    axes.push((decl.target_state.clone(), results.clone()));
                } else {
                    let result = results.first().ok_or_else(|| RunError::InvalidChannelValue {
                        reason: "call produced no result".to_string(),
                    })?;
                    seed_set(prompt, &mut base, &decl.target_state, result)?;
                }
            }
        }
    }

    if axes.is_empty() {
        return Ok(vec![base]);
    }
    let mut docs = vec![base];
    for (target, elements) in &axes {
        let mut expanded = Vec::with_capacity(docs.len() * elements.len());
        for doc in &docs {
            for element in elements {
                let mut instance = doc.clone();
                seed_set(prompt, &mut instance, target, element)?;
                expanded.push(instance);
            }
        }
        docs = expanded;
    }
    Ok(docs)
}

fn check_seed_texts(values: &[String]) -> Result<(), RunError> {
    for v in values {
        if v.contains('\n') {
            return Err(RunError::InvalidChannelValue {
                reason: format!("seeded text contains a newline: `{}`", v.escape_debug()),
            });
        }
    }
    Ok(())
}

fn seed_set(
    prompt: &CompiledPrompt,
    doc: &mut Document,
    state: &str,
    values: &[String],
) -> Result<(), RunError> {
    if values.is_empty() {
        return Err(RunError::InvalidChannelValue {
            reason: format!("channel to `{state}` resolved to no values"),
        });
    }
    let node = prompt
        .pda
        .find_top_level(state)
        .expect("validated channel target");
    check_count(prompt, state, values.len())?;
    let format = prompt.pda.node(node).format.clone();
    doc.0.insert(
        state.to_string(),
        values
            .iter()
            .map(|text| Entry::Leaf {
                text: text.clone(),
                format: format.clone(),
                provenance: Provenance::Seeded,
            })
            .collect(),
    );
    Ok(())
}

fn seed_extend(
    prompt: &CompiledPrompt,
    doc: &mut Document,
    state: &str,
    values: &[String],
) -> Result<(), RunError> {
    let node = prompt
        .pda
        .find_top_level(state)
        .expect("validated channel target");
    let format = prompt.pda.node(node).format.clone();
    let existing = doc.entries(state).len();
    check_count(prompt, state, existing + values.len())?;
    for text in values {
        doc.push_entry(
            state,
            Entry::Leaf {
                text: text.clone(),
                format: format.clone(),
                provenance: Provenance::Seeded,
            },
        );
    }
    Ok(())
}

fn check_count(prompt: &CompiledPrompt, state: &str, count: usize) -> Result<(), RunError> {
    let node = prompt.pda.find_top_level(state).expect("validated");
    let max = prompt.pda.node(node).max_count;
    if count > max as usize {
        return Err(RunError::CountOverflow {
            state: state.to_string(),
            max,
            got: count,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::validate;
    use crate::lang::parse_program;

    fn fan_prompt() -> CompiledPrompt {
        let src = "\
entry(fan): demo
prompt(fan): fan out
- target(a) mapped
- target(b) mapped
> a(text): first
> b(text): second
> c(text): join
__exit(a,b,c):
";
        let program = validate(&parse_program(src).unwrap()).unwrap();
        program.prompt("fan").unwrap().clone()
    }

    #[test]
    fn two_mapped_channels_cross_product_in_declaration_order() {
        let prompt = fan_prompt();
        let a = ChannelData::Values(vec!["a1".to_string(), "a2".to_string()]);
        let b = ChannelData::Values(vec!["b1".to_string(), "b2".to_string(), "b3".to_string()]);
        let channels: Vec<(&ChannelDecl, &ChannelData)> = vec![
            (&prompt.decl.channels[0], &a),
            (&prompt.decl.channels[1], &b),
        ];
        let seeds = build_seeds(&prompt, &channels).unwrap();
        assert_eq!(seeds.len(), 6);
        let pairs: Vec<(String, String)> = seeds
            .iter()
            .map(|d| {
                (
                    d.leaf_texts("a")[0].clone(),
                    d.leaf_texts("b")[0].clone(),
                )
            })
            .collect();
        let expect = [
            ("a1", "b1"),
            ("a1", "b2"),
            ("a1", "b3"),
            ("a2", "b1"),
            ("a2", "b2"),
            ("a2", "b3"),
        ];
        for (got, want) in pairs.iter().zip(expect.iter()) {
            assert_eq!((got.0.as_str(), got.1.as_str()), *want);
        }
    }

    #[test]
    fn zero_channels_yield_one_empty_document() {
        let prompt = fan_prompt();
        let seeds = build_seeds(&prompt, &[]).unwrap();
        assert_eq!(seeds.len(), 1);
        assert!(seeds[0].0.is_empty());
    }

    #[test]
    fn append_extends_and_respects_max_count() {
        let src = "\
entry(p): demo
prompt(p): x
- target(a)
- append(a)
> a[2](text): t
__exit(a):
";
        let program = validate(&parse_program(src).unwrap()).unwrap();
        let prompt = program.prompt("p").unwrap();
        let first = ChannelData::Values(vec!["one".to_string()]);
        let second = ChannelData::Values(vec!["two".to_string()]);
        let seeds = build_seeds(
            prompt,
            &[
                (&prompt.decl.channels[0], &first),
                (&prompt.decl.channels[1], &second),
            ],
        )
        .unwrap();
        assert_eq!(seeds[0].leaf_texts("a"), ["one", "two"]);

        let overflow = ChannelData::Values(vec!["two".to_string(), "three".to_string()]);
        let err = build_seeds(
            prompt,
            &[
                (&prompt.decl.channels[0], &first),
                (&prompt.decl.channels[1], &overflow),
            ],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            RunError::CountOverflow {
                max: 2,
                got: 3,
                ..
            }
        ));
    }

    #[test]
    fn newline_in_seed_text_is_rejected() {
        let prompt = fan_prompt();
        let bad = ChannelData::Values(vec!["two\nlines".to_string()]);
        let channels: Vec<(&ChannelDecl, &ChannelData)> = vec![(&prompt.decl.channels[0], &bad)];
        assert!(matches!(
            build_seeds(&prompt, &channels).unwrap_err(),
            RunError::InvalidChannelValue { .. }
        ));
    }

    #[test]
    fn identity_callee_returns_its_kwarg() {
        let callee = IdentityCallee;
        let kwargs: BTreeMap<String, Value> =
            [("x".to_string(), Value::Text("the question".to_string()))].into();
        assert_eq!(
            callee.call(&kwargs).unwrap(),
            Value::Text("the question".to_string())
        );
        assert!(callee.call(&BTreeMap::new()).is_err());
    }

    #[test]
    fn seeded_entries_carry_channel_provenance() {
        let prompt = fan_prompt();
        let a = ChannelData::Values(vec!["a1".to_string()]);
        let channels: Vec<(&ChannelDecl, &ChannelData)> = vec![(&prompt.decl.channels[0], &a)];
        let seeds = build_seeds(&prompt, &channels).unwrap();
        match &seeds[0].entries("a")[0] {
            Entry::Leaf { provenance, .. } => assert_eq!(*provenance, Provenance::Seeded),
            other => panic!("unexpected {other:?}"),
        }
    }
}
