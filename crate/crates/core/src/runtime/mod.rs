//! Program execution: channels, questionnaire filling, traces, and replay.

pub mod backends;
pub mod channels;
pub mod document;
pub mod engine;
pub mod trace;

use thiserror::Error;

pub use backends::{default_sampling, BackendConfigFile, BackendSet};
pub use channels::{Callee, CalleeRegistry, IdentityCallee};
pub use document::{
    check_conformance, parse_rendered_document, render_body, Document, Entry, PathStep,
    Provenance, Value,
};
pub use engine::{
    fill_questionnaire, replay_trace, run_program, Outputs, ProgramCallee, ReplayOutcome,
    RunFailure, RunOptions, RunResult,
};
pub use trace::{ChannelData, Stacks, TraceEvent, TraceRecord, TRACE_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("missing input `{name}`")]
    MissingInput { name: String },
    #[error("program has no prompt `{name}`")]
    UnknownPrompt { name: String },
    #[error("prompt `{prompt}`: every branch has reached its trip limit")]
    TripLimitDeadlock { prompt: String },
    #[error("channel reads from {prompts:?} but none of them has executed")]
    UnresolvedSource { prompts: Vec<String> },
    #[error("state `{state}` takes at most {max} entries, channel would make {got}")]
    CountOverflow { state: String, max: u32, got: usize },
    #[error("seeded data is not a contiguous prefix: `{state}` is seeded after an unseeded state")]
    ScheduleGap { state: String },
    #[error("line {line} does not conform to the questionnaire: {reason}")]
    NonConformantLine { line: u32, reason: String },
    #[error("no callee registered under `{name}`")]
    UnknownCallee { name: String },
    #[error("callee `{name}` failed: {message}")]
    CalleeFailure { name: String, message: String },
    #[error("invalid channel value: {reason}")]
    InvalidChannelValue { reason: String },
    #[error("no backend bound for format `{format}`")]
    MissingBackend { format: String },
    #[error("backend configuration: {reason}")]
    Config { reason: String },
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error("trace schema version {found}, this engine reads {expected}")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("trace was recorded for a different program (hash mismatch)")]
    ProgramHashMismatch,
    #[error("malformed trace: {reason}")]
    TraceFormat { reason: String },
    #[error("replay diverged at event {event}: {reason}")]
    ReplayDivergence { event: usize, reason: String },
}
