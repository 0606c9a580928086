//! Execution traces: the complete, replayable event log of one run.
//!
//! A trace holds the program identity (hash of the canonical source), the
//! macro bindings and inputs, the ordered event list, and a final snapshot of
//! the per-prompt document stacks. Given the program and the trace, replay
//! reconstructs the execution without any backend and verifies it step by
//! step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lang::MacroValue;
use crate::lm::SamplingConfig;

use super::document::{Document, PathStep, Value};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// `prompt name -> visits -> questionnaire instances`.
pub type Stacks = BTreeMap<String, Vec<Vec<Document>>>;

/// Resolved data moved by one channel execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelData {
    /// Copy/append: the resolved source texts (for mapped channels, the
    /// elements fanned out over instances).
    Values(Vec<String>),
    /// Call: the result texts of each invocation (one per source element for
    /// mapped calls).
    Calls(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TraceEvent {
    PromptEntered {
        prompt: String,
        visit: u32,
        instances: u32,
    },
    ChannelExecuted {
        prompt: String,
        /// Canonical text of the channel declaration.
        channel: String,
        data: ChannelData,
    },
    LineGenerated {
        prompt: String,
        instance: u32,
        path: Vec<PathStep>,
        prefix: String,
        text: String,
        format: String,
        sampling: SamplingConfig,
    },
    ChoiceMade {
        prompt: String,
        instance: u32,
        candidates: Vec<String>,
        scores: Option<Vec<f64>>,
        chosen: usize,
    },
    PromptExited {
        prompt: String,
        branch: Option<String>,
        exit_fields: Vec<String>,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::PromptEntered { .. } => "prompt-entered",
            TraceEvent::ChannelExecuted { .. } => "channel-executed",
            TraceEvent::LineGenerated { .. } => "line-generated",
            TraceEvent::ChoiceMade { .. } => "choice-made",
            TraceEvent::PromptExited { .. } => "prompt-exited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub program_hash: String,
    pub macros: BTreeMap<String, MacroValue>,
    pub inputs: BTreeMap<String, Value>,
    pub events: Vec<TraceEvent>,
    pub stacks: Stacks,
}

impl TraceRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, super::RunError> {
        // Check the version before strict decoding so old traces fail clearly.
        #[derive(Deserialize)]
        struct VersionProbe {
            schema_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text).map_err(|e| {
            super::RunError::TraceFormat {
                reason: e.to_string(),
            }
        })?;
        if probe.schema_version != TRACE_SCHEMA_VERSION {
            return Err(super::RunError::SchemaVersionMismatch {
                expected: TRACE_SCHEMA_VERSION,
                found: probe.schema_version,
            });
        }
        serde_json::from_str(text).map_err(|e| super::RunError::TraceFormat {
            reason: e.to_string(),
        })
    }
}
