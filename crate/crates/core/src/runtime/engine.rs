//! The execution engine.
//!
//! A run walks prompts from the entry, following chosen branches until an
//! exit leaf. Per prompt entry: channels resolve first (copies and appends in
//! declaration order, then calls), seeding one questionnaire instance per
//! element of the mapped cross product; each instance is then filled by
//! driving the automaton line by line. Seeded lines render verbatim; the rest
//! are completed by the format's backend; whenever more than one transition
//! is admissible the choice algorithm picks one. Next-kind prompts end with a
//! branch selection over live branches (trip limits filter the candidates);
//! the first instance decides for all instances of one entry.
//!
//! Replay re-runs the same engine with every external effect (completion,
//! choice, call) taken from a recorded trace, verifying each reconstructed
//! event and document against the recording.

use std::collections::BTreeMap;

use crate::compile::pda::{Pda, Transition, ROOT};
use crate::compile::{terminal_prefix, CompiledProgram, CompiledPrompt};
use crate::lang::unparse::unparse_channel;
use crate::lang::{Branch, ChannelDecl, ChannelKind, Expression, LeafAction, MacroBindings};
use crate::lm::{choose, complete_line, SamplingConfig};

use super::backends::BackendSet;
use super::channels::{build_seeds, Callee, CalleeRegistry};
use super::document::{Document, Entry, PathStep, Provenance, Value};
use super::trace::{ChannelData, Stacks, TraceEvent, TraceRecord, TRACE_SCHEMA_VERSION};
use super::RunError;

/// One output association per exiting questionnaire instance.
pub type Outputs = Vec<BTreeMap<String, Vec<String>>>;

pub struct RunOptions {
    pub backends: BackendSet,
    pub callees: CalleeRegistry,
    /// Recorded in the trace header; expansion happened before parsing.
    pub macros: MacroBindings,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            backends: BackendSet::new(),
            callees: CalleeRegistry::with_builtins(),
            macros: MacroBindings::new(),
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub outputs: Outputs,
    pub trace: TraceRecord,
}

/// A failed run still carries the trace collected so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: RunError,
    pub partial_trace: TraceRecord,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub outputs: Outputs,
    pub stacks: Stacks,
}

/// Execute a program against live backends, producing outputs and a trace.
pub fn run_program(
    program: &CompiledProgram,
    inputs: BTreeMap<String, Value>,
    options: &RunOptions,
) -> Result<RunResult, Box<RunFailure>> {
    let mut engine = Engine::new(
        program,
        &inputs,
        Mode::Live {
            backends: &options.backends,
            callees: &options.callees,
        },
    );
    match engine.run() {
        Ok(outputs) => {
            let trace = engine.into_trace(&options.macros, &inputs);
            Ok(RunResult { outputs, trace })
        }
        Err(error) => Err(Box::new(RunFailure {
            error,
            partial_trace: engine.into_trace(&options.macros, &inputs),
        })),
    }
}

/// Re-execute a recorded run, consuming its completions and choices instead
/// of calling backends, and verify every step against the recording.
pub fn replay_trace(
    program: &CompiledProgram,
    trace: &TraceRecord,
) -> Result<ReplayOutcome, RunError> {
    if trace.schema_version != TRACE_SCHEMA_VERSION {
        return Err(RunError::SchemaVersionMismatch {
            expected: TRACE_SCHEMA_VERSION,
            found: trace.schema_version,
        });
    }
    if trace.program_hash != program.program_hash {
        return Err(RunError::ProgramHashMismatch);
    }
    let mut engine = Engine::new(
        program,
        &trace.inputs,
        Mode::Replay {
            recorded: trace,
            cursor: 0,
        },
    );
    let outputs = engine.run()?;
    Ok(ReplayOutcome {
        outputs,
        stacks: engine.stacks,
    })
}

/// Fill one questionnaire instance of a prompt standalone: no channels, no
/// trace, no successor bookkeeping. Returns the document and, for next-kind
/// prompts, the chosen branch.
pub fn fill_questionnaire(
    program: &CompiledProgram,
    prompt_name: &str,
    seed: Document,
    backends: &BackendSet,
) -> Result<(Document, Option<String>), RunError> {
    let prompt = program
        .prompt(prompt_name)
        .ok_or_else(|| RunError::UnknownPrompt {
            name: prompt_name.to_string(),
        })?;
    let callees = CalleeRegistry::new();
    let inputs = BTreeMap::new();
    let mut engine = Engine::new(program, &inputs, Mode::Live { backends, callees: &callees });
    let filled = engine.fill(prompt, seed, 1, 1, None)?;
    Ok((filled.document, filled.branch))
}

enum Mode<'a> {
    Live {
        backends: &'a BackendSet,
        callees: &'a CalleeRegistry,
    },
    Replay {
        recorded: &'a TraceRecord,
        cursor: usize,
    },
}

struct Engine<'a> {
    program: &'a CompiledProgram,
    inputs: &'a BTreeMap<String, Value>,
    stacks: Stacks,
    visit_counts: BTreeMap<String, u32>,
    /// Completion order stamp per prompt, for "most recently executed".
    completion_seq: BTreeMap<String, u64>,
    seq: u64,
    events: Vec<TraceEvent>,
    mode: Mode<'a>,
}

struct FilledInstance {
    document: Document,
    branch: Option<String>,
}

impl<'a> Engine<'a> {
    fn new(
        program: &'a CompiledProgram,
        inputs: &'a BTreeMap<String, Value>,
        mode: Mode<'a>,
    ) -> Self {
        Engine {
            program,
            inputs,
            stacks: Stacks::new(),
            visit_counts: BTreeMap::new(),
            completion_seq: BTreeMap::new(),
            seq: 0,
            events: Vec::new(),
            mode,
        }
    }

    fn into_trace(self, macros: &MacroBindings, inputs: &BTreeMap<String, Value>) -> TraceRecord {
        TraceRecord {
            schema_version: TRACE_SCHEMA_VERSION,
            program_hash: self.program.program_hash.clone(),
            macros: macros.clone(),
            inputs: inputs.clone(),
            events: self.events,
            stacks: self.stacks,
        }
    }

    fn run(&mut self) -> Result<Outputs, RunError> {
        let program = self.program;
        let mut current = program.entry.clone();
        loop {
            let prompt = program.prompt(&current).expect("validated branch targets");
            let visit = {
                let count = self.visit_counts.entry(current.clone()).or_insert(0);
                *count += 1;
                *count
            };

            let data = self.channel_data(prompt)?;
            let pairs: Vec<(&ChannelDecl, &ChannelData)> = prompt
                .decl
                .channels
                .iter()
                .zip(data.iter())
                .collect();
            let seeds = build_seeds(prompt, &pairs)?;
            self.emit(TraceEvent::PromptEntered {
                prompt: current.clone(),
                visit,
                instances: seeds.len() as u32,
            })?;
            for (decl, data) in &pairs {
                self.emit(TraceEvent::ChannelExecuted {
                    prompt: current.clone(),
                    channel: unparse_channel(decl),
                    data: (*data).clone(),
                })?;
            }

            let mut documents = Vec::with_capacity(seeds.len());
            let mut decided: Option<String> = None;
            for (i, seed) in seeds.into_iter().enumerate() {
                let instance = i as u32 + 1;
                let filled = self.fill(prompt, seed, visit, instance, decided.as_deref())?;
                if decided.is_none() {
                    decided = filled.branch.clone();
                }
                self.verify_instance(&current, visit, instance, &filled.document)?;
                documents.push(filled.document);
            }
            self.stacks
                .entry(current.clone())
                .or_default()
                .push(documents.clone());
            self.seq += 1;
            self.completion_seq.insert(current.clone(), self.seq);

            match &prompt.decl.leaf.action {
                LeafAction::Next(_) => {
                    let branch = decided.expect("next-kind prompts always decide a branch");
                    self.emit(TraceEvent::PromptExited {
                        prompt: current.clone(),
                        branch: Some(branch.clone()),
                        exit_fields: Vec::new(),
                    })?;
                    current = branch;
                }
                LeafAction::Exit(fields) => {
                    self.emit(TraceEvent::PromptExited {
                        prompt: current.clone(),
                        branch: None,
                        exit_fields: fields.clone(),
                    })?;
                    let outputs = documents
                        .iter()
                        .map(|doc| {
                            fields
                                .iter()
                                .map(|f| (f.clone(), doc.leaf_texts(f)))
                                .collect()
                        })
                        .collect();
                    self.finish_replay()?;
                    return Ok(outputs);
                }
            }
        }
    }

    /// Drive one questionnaire instance through the automaton.
    fn fill(
        &mut self,
        prompt: &CompiledPrompt,
        seed: Document,
        visit: u32,
        instance: u32,
        decided: Option<&str>,
    ) -> Result<FilledInstance, RunError> {
        verify_seed_prefix(prompt, &seed)?;
        let pda = &prompt.pda;
        let name = prompt.decl.name.clone();
        let mut text = prompt.header_text.clone();
        let mut doc = Document::new();
        let mut stack: Vec<(usize, u32)> = Vec::new();

        let mut next = match pda.node(ROOT).first_child {
            Some(first) => Transition::Enter {
                node: first,
                index: 1,
            },
            None => Transition::Terminal,
        };
        loop {
            match next {
                Transition::Enter { node, index } => {
                    let depth = pda.node(node).depth;
                    stack.truncate(depth - 1);
                    let parent_path = path_of(pda, &stack);
                    stack.push((node, index));
                    let prefix = pda.line_prefix(node, index);
                    let is_record = pda.node(node).is_record();
                    let state_name = pda.node(node).name.clone();
                    let format = pda.node(node).format.clone();

                    if is_record {
                        doc.record_at_mut(&parent_path)
                            .expect("parents exist in creation order")
                            .push_entry(&state_name, Entry::Record(Document::new()));
                        text.push_str(&prefix);
                        text.push('\n');
                        next = Transition::Enter {
                            node: pda.node(node).first_child.expect("records have children"),
                            index: 1,
                        };
                        continue;
                    }

                    let seeded = if depth == 1 {
                        seed.entries(&state_name).get(index as usize - 1).cloned()
                    } else {
                        None
                    };
                    let line_text = match seeded {
                        Some(Entry::Leaf { text: seeded_text, .. }) => {
                            doc.record_at_mut(&parent_path)
                                .expect("parents exist")
                                .push_entry(
                                    &state_name,
                                    Entry::Leaf {
                                        text: seeded_text.clone(),
                                        format: format.clone(),
                                        provenance: Provenance::Seeded,
                                    },
                                );
                            seeded_text
                        }
                        Some(Entry::Record(_)) => unreachable!("seeds hold only text leaves"),
                        None => {
                            let full_path = path_of(pda, &stack);
                            let request = format!("{text}{prefix} ");
                            let (completion, sampling) = self.complete_for(
                                &name, visit, instance, &full_path, &prefix, &request, &format,
                            )?;
                            doc.record_at_mut(&parent_path)
                                .expect("parents exist")
                                .push_entry(
                                    &state_name,
                                    Entry::Leaf {
                                        text: completion.clone(),
                                        format: format.clone(),
                                        provenance: Provenance::Generated,
                                    },
                                );
                            self.emit(TraceEvent::LineGenerated {
                                prompt: name.clone(),
                                instance,
                                path: full_path,
                                prefix: prefix.clone(),
                                text: completion.clone(),
                                format: format.clone(),
                                sampling,
                            })?;
                            completion
                        }
                    };
                    text.push_str(&prefix);
                    text.push(' ');
                    text.push_str(&line_text);
                    text.push('\n');

                    let candidates = pda.candidates_after(&stack);
                    next = if candidates.len() == 1 {
                        candidates[0]
                    } else if let Some((snode, sindex)) = next_seeded(pda, &seed, &stack) {
                        let dictated = Transition::Enter {
                            node: snode,
                            index: sindex,
                        };
                        debug_assert!(
                            candidates.contains(&dictated),
                            "seed prefix always continues along an admissible transition"
                        );
                        dictated
                    } else {
                        let rendered: Vec<String> = candidates
                            .iter()
                            .map(|t| match t {
                                Transition::Enter { node, index } => {
                                    pda.line_prefix(*node, *index)
                                }
                                Transition::Terminal => {
                                    terminal_prefix(&prompt.decl.leaf).to_string()
                                }
                            })
                            .collect();
                        let (chosen, scores) = self.choose_for(&name, instance, &text, &rendered)?;
                        self.emit(TraceEvent::ChoiceMade {
                            prompt: name.clone(),
                            instance,
                            candidates: rendered,
                            scores,
                            chosen,
                        })?;
                        candidates[chosen]
                    };
                }
                Transition::Terminal => {
                    return match &prompt.decl.leaf.action {
                        LeafAction::Next(branches) => {
                            let branch = match decided {
                                Some(b) => b.to_string(),
                                None => self.decide_branch(&name, instance, &text, branches)?,
                            };
                            Ok(FilledInstance {
                                document: doc,
                                branch: Some(branch),
                            })
                        }
                        LeafAction::Exit(_) => Ok(FilledInstance {
                            document: doc,
                            branch: None,
                        }),
                    };
                }
            }
        }
    }

    /// Branch selection at a next-kind leaf: trip limits filter the
    /// candidates; a single live branch is taken without a model call.
    fn decide_branch(
        &mut self,
        prompt: &str,
        instance: u32,
        text: &str,
        branches: &[Branch],
    ) -> Result<String, RunError> {
        let live: Vec<&Branch> = branches.iter().filter(|b| self.branch_live(b)).collect();
        match live.len() {
            0 => Err(RunError::TripLimitDeadlock {
                prompt: prompt.to_string(),
            }),
            1 => Ok(live[0].prompt.clone()),
            _ => {
                let names: Vec<String> = live.iter().map(|b| b.prompt.clone()).collect();
                let request = format!("{text}exit(next): ");
                let (chosen, scores) = self.choose_for(prompt, instance, &request, &names)?;
                self.emit(TraceEvent::ChoiceMade {
                    prompt: prompt.to_string(),
                    instance,
                    candidates: names.clone(),
                    scores,
                    chosen,
                })?;
                Ok(names[chosen].clone())
            }
        }
    }

    fn branch_live(&self, branch: &Branch) -> bool {
        match branch.trip_limit {
            Some(limit) => {
                self.visit_counts
                    .get(&branch.prompt)
                    .copied()
                    .unwrap_or(0)
                    < limit
            }
            None => true,
        }
    }

    /// Per-channel resolved data in declaration order. Live mode resolves
    /// copies first then executes calls; replay reads the recorded events.
    fn channel_data(&mut self, prompt: &CompiledPrompt) -> Result<Vec<ChannelData>, RunError> {
        let declarations = &prompt.decl.channels;
        match &self.mode {
            Mode::Live { callees, .. } => {
                let callees = *callees;
                let mut out: Vec<Option<ChannelData>> = vec![None; declarations.len()];
                for (i, decl) in declarations.iter().enumerate() {
                    if decl.kind != ChannelKind::Call {
                        let values = match self.resolve_source(decl) {
                            // "Previous content of the current prompt" is
                            // vacuous on the first visit: appends from a
                            // never-executed source append nothing.
                            Err(RunError::UnresolvedSource { .. })
                                if decl.kind == ChannelKind::Append =>
                            {
                                Vec::new()
                            }
                            other => other?,
                        };
                        out[i] = Some(ChannelData::Values(values));
                    }
                }
                for (i, decl) in declarations.iter().enumerate() {
                    if decl.kind == ChannelKind::Call {
                        out[i] = Some(ChannelData::Calls(self.execute_call(decl, callees)?));
                    }
                }
                Ok(out.into_iter().map(|d| d.expect("all slots filled")).collect())
            }
            Mode::Replay { recorded, cursor } => {
                let mut out = Vec::with_capacity(declarations.len());
                for i in 0..declarations.len() {
                    let at = *cursor + 1 + i;
                    match recorded.events.get(at) {
                        Some(TraceEvent::ChannelExecuted { data, .. }) => out.push(data.clone()),
                        other => {
                            return Err(RunError::ReplayDivergence {
                                event: at,
                                reason: format!(
                                    "expected a channel-executed event, trace has {}",
                                    other.map(TraceEvent::kind).unwrap_or("nothing")
                                ),
                            })
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Resolve a copy/append source: program inputs when no prompt qualifier,
    /// else the latest completed visit of the most recently executed prompt
    /// among the candidates (entries flattened across instances).
    fn resolve_source(&self, decl: &ChannelDecl) -> Result<Vec<String>, RunError> {
        let field = decl.source_field.as_deref().unwrap_or(&decl.target_state);
        if decl.source_prompts.is_empty() {
            match self.inputs.get(field) {
                Some(value) => Ok(value.clone().into_list()),
                None => Err(RunError::MissingInput {
                    name: field.to_string(),
                }),
            }
        } else {
            self.prompt_field(&decl.source_prompts, field)
        }
    }

    fn prompt_field(&self, prompts: &[String], field: &str) -> Result<Vec<String>, RunError> {
        let best = prompts
            .iter()
            .filter_map(|p| self.completion_seq.get(p).map(|s| (*s, p)))
            .max_by_key(|(s, _)| *s);
        let Some((_, source)) = best else {
            return Err(RunError::UnresolvedSource {
                prompts: prompts.to_vec(),
            });
        };
        let visits = self.stacks.get(source).expect("completed prompts stack");
        let instances = visits.last().expect("completed visits are non-empty");
        Ok(instances
            .iter()
            .flat_map(|doc| doc.leaf_texts(field))
            .collect())
    }

    fn execute_call(
        &self,
        decl: &ChannelDecl,
        callees: &CalleeRegistry,
    ) -> Result<Vec<Vec<String>>, RunError> {
        let callee_name = decl.callee.as_deref().expect("call channels have callees");
        let callee = callees.get(callee_name).ok_or_else(|| RunError::UnknownCallee {
            name: callee_name.to_string(),
        })?;
        let mut kwargs: BTreeMap<String, Value> = BTreeMap::new();
        for (key, expr) in &decl.kwargs {
            let value = match expr {
                Expression::IntLit(v) => Value::Text(v.to_string()),
                Expression::StringLit(s) => Value::Text(s.clone()),
                Expression::Identifier(id) => {
                    if decl.source_prompts.is_empty() {
                        self.inputs
                            .get(id)
                            .cloned()
                            .ok_or_else(|| RunError::MissingInput { name: id.clone() })?
                    } else {
                        Value::from_list(self.prompt_field(&decl.source_prompts, id)?)
                    }
                }
            };
            kwargs.insert(key.clone(), value);
        }
        if decl.mapped {
            let field = decl.source_field.as_deref().unwrap_or(&decl.target_state);
            let elements = self.resolve_source(decl)?;
            elements
                .into_iter()
                .map(|element| {
                    let mut bound = kwargs.clone();
                    bound.insert(field.to_string(), Value::Text(element));
                    invoke(callee_name, callee.as_ref(), &bound)
                })
                .collect()
        } else {
            Ok(vec![invoke(callee_name, callee.as_ref(), &kwargs)?])
        }
    }

    /// One line completion: live backends or the recorded event. Replay also
    /// cross-checks the text against the recorded document stacks to catch
    /// tampered completions at their event.
    #[allow(clippy::too_many_arguments)]
    fn complete_for(
        &mut self,
        prompt: &str,
        visit: u32,
        instance: u32,
        path: &[PathStep],
        prefix: &str,
        request: &str,
        format: &str,
    ) -> Result<(String, SamplingConfig), RunError> {
        match &self.mode {
            Mode::Live { backends, .. } => {
                let (backend, sampling) = backends.resolve(format, &self.program.formats)?;
                let text = complete_line(backend.as_ref(), request, sampling)?;
                Ok((text, sampling.clone()))
            }
            Mode::Replay { recorded, cursor } => {
                let cursor = *cursor;
                let Some(TraceEvent::LineGenerated {
                    prompt: ev_prompt,
                    instance: ev_instance,
                    path: ev_path,
                    prefix: ev_prefix,
                    text,
                    format: ev_format,
                    sampling,
                }) = recorded.events.get(cursor)
                else {
                    return Err(RunError::ReplayDivergence {
                        event: cursor,
                        reason: format!(
                            "engine needs a completion for {prompt}:{prefix}, trace has {}",
                            recorded
                                .events
                                .get(cursor)
                                .map(TraceEvent::kind)
                                .unwrap_or("nothing")
                        ),
                    });
                };
                if ev_prompt != prompt
                    || *ev_instance != instance
                    || ev_path != path
                    || ev_prefix != prefix
                    || ev_format != format
                {
                    return Err(RunError::ReplayDivergence {
                        event: cursor,
                        reason: format!(
                            "recorded line `{ev_prefix}` does not match the engine position `{prefix}`"
                        ),
                    });
                }
                let recorded_leaf = recorded
                    .stacks
                    .get(prompt)
                    .and_then(|visits| visits.get(visit as usize - 1))
                    .and_then(|instances| instances.get(instance as usize - 1))
                    .and_then(|doc| doc.leaf_text_at(path));
                if recorded_leaf != Some(text.as_str()) {
                    return Err(RunError::ReplayDivergence {
                        event: cursor,
                        reason: format!(
                            "completion `{text}` does not match the recorded document at {prefix}"
                        ),
                    });
                }
                Ok((text.clone(), sampling.clone()))
            }
        }
    }

    fn choose_for(
        &mut self,
        prompt: &str,
        instance: u32,
        request: &str,
        candidates: &[String],
    ) -> Result<(usize, Option<Vec<f64>>), RunError> {
        match &self.mode {
            Mode::Live { backends, .. } => {
                let (backend, sampling) = backends.resolve_choice(&self.program.formats)?;
                let refs: Vec<&str> = candidates.iter().map(String::as_str).collect();
                let outcome = choose(backend.as_ref(), request, &refs, sampling)?;
                Ok((outcome.index, outcome.scores))
            }
            Mode::Replay { recorded, cursor } => {
                let cursor = *cursor;
                let Some(TraceEvent::ChoiceMade {
                    prompt: ev_prompt,
                    instance: ev_instance,
                    candidates: ev_candidates,
                    scores,
                    chosen,
                }) = recorded.events.get(cursor)
                else {
                    return Err(RunError::ReplayDivergence {
                        event: cursor,
                        reason: format!(
                            "engine needs a choice in {prompt}, trace has {}",
                            recorded
                                .events
                                .get(cursor)
                                .map(TraceEvent::kind)
                                .unwrap_or("nothing")
                        ),
                    });
                };
                if ev_prompt != prompt || *ev_instance != instance || ev_candidates != candidates {
                    return Err(RunError::ReplayDivergence {
                        event: cursor,
                        reason: format!(
                            "recorded choice candidates {ev_candidates:?} do not match {candidates:?}"
                        ),
                    });
                }
                if *chosen >= candidates.len() {
                    return Err(RunError::ReplayDivergence {
                        event: cursor,
                        reason: format!("chosen index {chosen} out of range"),
                    });
                }
                Ok((*chosen, scores.clone()))
            }
        }
    }

    /// Append an event; replay verifies it equals the recorded one and
    /// advances the cursor (the single advance point).
    fn emit(&mut self, event: TraceEvent) -> Result<(), RunError> {
        if let Mode::Replay { recorded, cursor } = &mut self.mode {
            match recorded.events.get(*cursor) {
                Some(expected) if *expected == event => *cursor += 1,
                Some(expected) => {
                    return Err(RunError::ReplayDivergence {
                        event: *cursor,
                        reason: format!(
                            "engine produced a {} event that differs from the recorded {}",
                            event.kind(),
                            expected.kind()
                        ),
                    })
                }
                None => {
                    return Err(RunError::ReplayDivergence {
                        event: *cursor,
                        reason: format!("trace ends before a {} event", event.kind()),
                    })
                }
            }
        }
        self.events.push(event);
        Ok(())
    }

    fn verify_instance(
        &self,
        prompt: &str,
        visit: u32,
        instance: u32,
        document: &Document,
    ) -> Result<(), RunError> {
        if let Mode::Replay { recorded, cursor } = &self.mode {
            let rec = recorded
                .stacks
                .get(prompt)
                .and_then(|visits| visits.get(visit as usize - 1))
                .and_then(|instances| instances.get(instance as usize - 1));
            if rec != Some(document) {
                return Err(RunError::ReplayDivergence {
                    event: *cursor,
                    reason: format!(
                        "reconstructed document for {prompt} visit {visit} instance {instance} \
                         differs from the recorded stack"
                    ),
                });
            }
        }
        Ok(())
    }

    fn finish_replay(&self) -> Result<(), RunError> {
        if let Mode::Replay { recorded, cursor } = &self.mode {
            if *cursor != recorded.events.len() {
                return Err(RunError::ReplayDivergence {
                    event: *cursor,
                    reason: format!(
                        "{} recorded events were never replayed",
                        recorded.events.len() - cursor
                    ),
                });
            }
            if self.stacks != recorded.stacks {
                return Err(RunError::ReplayDivergence {
                    event: *cursor,
                    reason: "final stacks differ from the recording".to_string(),
                });
            }
        }
        Ok(())
    }
}

fn invoke(
    name: &str,
    callee: &dyn Callee,
    kwargs: &BTreeMap<String, Value>,
) -> Result<Vec<String>, RunError> {
    callee
        .call(kwargs)
        .map(Value::into_list)
        .map_err(|message| RunError::CalleeFailure {
            name: name.to_string(),
            message,
        })
}

fn path_of(pda: &Pda, stack: &[(usize, u32)]) -> Vec<PathStep> {
    stack
        .iter()
        .map(|(node, index)| PathStep {
            state: pda.node(*node).name.clone(),
            index: *index,
        })
        .collect()
}

/// Seeded states must form a contiguous prefix of the top-level states in
/// declaration order (data communicated before generation leaves no holes).
fn verify_seed_prefix(prompt: &CompiledPrompt, seed: &Document) -> Result<(), RunError> {
    let mut gap = false;
    for id in prompt.pda.top_level() {
        let name = &prompt.pda.node(id).name;
        let seeded = !seed.entries(name).is_empty();
        if seeded && gap {
            return Err(RunError::ScheduleGap {
                state: name.clone(),
            });
        }
        if !seeded {
            gap = true;
        }
    }
    Ok(())
}

/// Next instance dictated by the seed, if any: more entries of the current
/// top-level state, or the first entry of its seeded successor.
fn next_seeded(pda: &Pda, seed: &Document, stack: &[(usize, u32)]) -> Option<(usize, u32)> {
    let &(node, index) = stack.last()?;
    if pda.node(node).depth != 1 {
        return None;
    }
    let seeded = seed.entries(&pda.node(node).name).len() as u32;
    if index < seeded {
        return Some((node, index + 1));
    }
    let successor = pda.node(node).successor?;
    if !seed.entries(&pda.node(successor).name).is_empty() {
        return Some((successor, 1));
    }
    None
}

/// A compiled program registered as a callee: kwargs become inputs, outputs
/// flatten into one text list in exit-field order across instances.
pub struct ProgramCallee {
    pub program: std::sync::Arc<CompiledProgram>,
    pub options: std::sync::Arc<RunOptions>,
}

impl Callee for ProgramCallee {
    fn call(&self, kwargs: &BTreeMap<String, Value>) -> Result<Value, String> {
        let result = run_program(&self.program, kwargs.clone(), &self.options)
            .map_err(|failure| failure.error.to_string())?;
        let mut texts = Vec::new();
        for assoc in result.outputs {
            for (_, mut values) in assoc {
                texts.append(&mut values);
            }
        }
        Ok(Value::from_list(texts))
    }
}
