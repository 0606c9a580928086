//! Client for OpenAI-compatible completion services.
//!
//! Speaks `POST {base_url}/v1/completions` with the classic fields (model,
//! prompt, max_tokens, temperature, stop, logprobs). Such services expose
//! neither a tokenizer nor the full next-token distribution, so the backend
//! reports `supports_full_distribution = false`; the choice algorithm then
//! relies on [`forced_logprobs`](OpenAiCompatibleLm::forced_logprobs) (the
//! echo trick, when the service accepts it) or plain completion.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Capabilities, LmBackend, LmError, SamplingConfig, TokenId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenAiCompatibleConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; unset means no auth header.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Ask the service for this many alternative logprobs per token.
    #[serde(default)]
    pub logprobs: Option<u32>,
    /// Attempt echo-based forced scoring for choices.
    #[serde(default = "default_true")]
    pub echo_scoring: bool,
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

fn default_true() -> bool {
    true
}

pub struct OpenAiCompatibleLm {
    config: OpenAiCompatibleConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    stop: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u32>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    echo: bool,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    logprobs: Option<LogProbs>,
}

#[derive(Debug, Default, Deserialize)]
struct LogProbs {
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    text_offset: Vec<usize>,
}

impl OpenAiCompatibleLm {
    pub fn new(config: OpenAiCompatibleConfig) -> Result<Self, LmError> {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| LmError::backend(format!("http client: {e}")))?;
        Ok(OpenAiCompatibleLm {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// POST with bounded retries on transport errors and 5xx responses.
    fn post(&self, request: &CompletionRequest) -> Result<CompletionResponse, LmError> {
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let mut builder = self.client.post(self.endpoint()).json(request);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json::<CompletionResponse>().map_err(|e| {
                            LmError::Backend {
                                message: format!("malformed completion response: {e}"),
                                attempts: attempt,
                                retryable: false,
                            }
                        });
                    }
                    let body = response.text().unwrap_or_default();
                    last = format!("{status}: {body}");
                    if !status.is_server_error() {
                        return Err(LmError::Backend {
                            message: last,
                            attempts: attempt,
                            retryable: false,
                        });
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(LmError::Backend {
            message: last,
            attempts,
            retryable: true,
        })
    }
}

impl LmBackend for OpenAiCompatibleLm {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_full_distribution: false,
            supports_concurrent_calls: true,
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        Err(LmError::Tokenize {
            text: text.to_string(),
            reason: "the service does not expose its tokenizer".to_string(),
        })
    }

    fn detokenize(&self, _tokens: &[TokenId]) -> Result<String, LmError> {
        Err(LmError::Capability {
            backend: self.name().to_string(),
            operation: "detokenize",
        })
    }

    fn greedy(&self, _prompt: &str) -> Result<Vec<f64>, LmError> {
        Err(LmError::Capability {
            backend: self.name().to_string(),
            operation: "greedy (full distribution)",
        })
    }

    fn complete(&self, prompt: &str, config: &SamplingConfig) -> Result<String, LmError> {
        let request = CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens: config.max_tokens,
            temperature: config.temperature,
            top_p: config.top_p,
            stop: config.stop_sequences.clone(),
            logprobs: self.config.logprobs,
            echo: false,
        };
        let response = self.post(&request)?;
        response
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| LmError::backend("completion response has no choices"))
    }

    /// Echo scoring: request zero new tokens with `echo` and `logprobs`, then
    /// keep the token logprobs whose text offset falls inside the forced
    /// continuation. Services that reject the request report `None` so the
    /// caller can fall back to plain completion.
    fn forced_logprobs(
        &self,
        prompt: &str,
        continuation: &str,
    ) -> Result<Option<Vec<f64>>, LmError> {
        if !self.config.echo_scoring {
            return Ok(None);
        }
        let full = format!("{prompt}{continuation}");
        let request = CompletionRequest {
            model: &self.config.model,
            prompt: &full,
            max_tokens: 0,
            temperature: 0.0,
            top_p: None,
            stop: Vec::new(),
            logprobs: Some(self.config.logprobs.unwrap_or(0)),
            echo: true,
        };
        let response = match self.post(&request) {
            Ok(r) => r,
            Err(LmError::Backend {
                retryable: false, ..
            }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let Some(choice) = response.choices.into_iter().next() else {
            return Ok(None);
        };
        let Some(logprobs) = choice.logprobs else {
            return Ok(None);
        };
        let cut = prompt.len();
        let mut out = Vec::new();
        for (offset, lp) in logprobs
            .text_offset
            .iter()
            .zip(logprobs.token_logprobs.iter())
        {
            if *offset >= cut {
                match lp {
                    Some(v) => out.push(*v),
                    None => return Ok(None),
                }
            }
        }
        if out.is_empty() {
            return Ok(None);
        }
        Ok(Some(out))
    }
}
