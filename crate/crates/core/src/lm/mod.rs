//! Language-model backends.
//!
//! The engine talks to models through [`LmBackend`]: tokenize/detokenize, a
//! one-step full-vocabulary distribution (`greedy`), and bounded completion.
//! Backends that cannot expose the full distribution (hosted APIs) advertise
//! it through [`Capabilities`] and the choice algorithm falls back to
//! completion-based selection.

pub mod choice;
pub mod openai;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use choice::{choose, ChoiceOutcome, TokenChoiceTree};
pub use openai::{OpenAiCompatibleConfig, OpenAiCompatibleLm};
pub use scripted::{ScriptedLm, ScriptedLmFile};

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// `greedy` (and `tokenize`) work, so the token choice tree can run.
    pub supports_full_distribution: bool,
    /// Calls may be issued from several threads at once.
    pub supports_concurrent_calls: bool,
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("backend `{backend}` does not support {operation}")]
    Capability {
        backend: String,
        operation: &'static str,
    },
    #[error("empty candidate passed to the choice tree")]
    EmptyCandidate,
    #[error("backend error after {attempts} attempt(s){}: {message}", if *.retryable { " (retryable)" } else { "" })]
    Backend {
        message: String,
        attempts: u32,
        retryable: bool,
    },
    #[error("cannot tokenize `{text}`: {reason}")]
    Tokenize { text: String, reason: String },
}

impl LmError {
    pub fn backend(message: impl Into<String>) -> Self {
        LmError::Backend {
            message: message.into(),
            attempts: 1,
            retryable: false,
        }
    }
}

/// Completion controls for one format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub max_tokens: usize,
    /// 0 means argmax decoding; logits are divided by the temperature before
    /// normalization otherwise.
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default = "default_stop")]
    pub stop_sequences: Vec<String>,
}

fn default_stop() -> Vec<String> {
    vec!["\n".to_string()]
}

impl SamplingConfig {
    pub fn new(max_tokens: usize, temperature: f64) -> Self {
        SamplingConfig {
            max_tokens,
            temperature,
            top_k: None,
            top_p: None,
            stop_sequences: default_stop(),
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig::new(20, 0.4)
    }
}

/// An abstract auto-regressive language model.
pub trait LmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError>;

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, LmError>;

    /// Natural-log probabilities over the full vocabulary for the next token
    /// after `prompt`. `exp` of the vector sums to 1.
    fn greedy(&self, prompt: &str) -> Result<Vec<f64>, LmError>;

    /// Sample a completion of `prompt` under `config`. The raw text may still
    /// contain a stop sequence; [`complete_line`] strips it.
    fn complete(&self, prompt: &str, config: &SamplingConfig) -> Result<String, LmError>;

    /// Per-token log-probabilities of forcing `continuation` after `prompt`,
    /// for services that can score but not expose `greedy`. `None` when the
    /// backend has no such facility.
    fn forced_logprobs(
        &self,
        _prompt: &str,
        _continuation: &str,
    ) -> Result<Option<Vec<f64>>, LmError> {
        Ok(None)
    }
}

/// Complete one line: ensure a newline stop sequence, truncate at the first
/// stop occurrence, and strip trailing whitespace.
pub fn complete_line(
    backend: &dyn LmBackend,
    prompt: &str,
    config: &SamplingConfig,
) -> Result<String, LmError> {
    if config.max_tokens == 0 {
        return Err(LmError::backend("max_tokens must be at least 1"));
    }
    let mut config = config.clone();
    if !config.stop_sequences.iter().any(|s| s == "\n") {
        config.stop_sequences.push("\n".to_string());
    }
    let raw = backend.complete(prompt, &config)?;
    let mut cut = raw.len();
    for stop in &config.stop_sequences {
        if let Some(at) = raw.find(stop.as_str()) {
            cut = cut.min(at);
        }
    }
    Ok(raw[..cut].trim_end().to_string())
}
