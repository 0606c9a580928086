//! Deterministic scripted backend for tests and offline runs.
//!
//! Two modes, combinable:
//! - *Rules*: a vocabulary plus suffix-matched next-token distributions.
//!   `greedy` returns the longest-suffix rule (uniform when none matches) and
//!   `complete` walks the distribution token by token. Sampling at nonzero
//!   temperature derives its generator from a hash of the prompt, so equal
//!   prompts always produce equal completions.
//! - *Transcript*: an ordered queue of `(line prefix, completion)` entries.
//!   Each `complete` call pops the front entry after asserting the prompt's
//!   last line starts with the recorded prefix. Transcript completions are
//!   returned verbatim (the recorded service already enforced its own token
//!   budget).

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Capabilities, LmBackend, LmError, SamplingConfig, TokenId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionRule {
    /// Rule applies when the prompt ends with this suffix; longest wins.
    pub suffix: String,
    /// Probability per vocabulary entry; must sum to 1 (±1e-9).
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Asserted against the start of the prompt's last line; empty matches
    /// anything (used for choice-time completions that start a fresh line).
    pub prefix: String,
    pub text: String,
}

/// On-disk form: `{ "vocab": [...], "rules": [...], "transcript": [...] }`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedLmFile {
    #[serde(default)]
    pub vocab: Vec<String>,
    #[serde(default)]
    pub rules: Vec<DistributionRule>,
    #[serde(default)]
    pub transcript: Vec<TranscriptEntry>,
    /// Seed mixed into prompt hashes for nonzero-temperature sampling.
    #[serde(default)]
    pub seed: u64,
    /// Advertise `greedy`; defaults to true exactly when rules are present.
    #[serde(default)]
    pub full_distribution: Option<bool>,
}

#[derive(Debug)]
pub struct ScriptedLm {
    vocab: Vec<String>,
    rules: Vec<DistributionRule>,
    transcript: Mutex<VecDeque<TranscriptEntry>>,
    seed: u64,
    full_distribution: bool,
    greedy_calls: AtomicUsize,
    complete_calls: AtomicUsize,
}

impl ScriptedLm {
    pub fn from_spec(file: ScriptedLmFile) -> Result<Self, LmError> {
        for (i, rule) in file.rules.iter().enumerate() {
            if rule.probs.len() != file.vocab.len() {
                return Err(LmError::backend(format!(
                    "rule {i}: {} probabilities for a vocabulary of {}",
                    rule.probs.len(),
                    file.vocab.len()
                )));
            }
            let sum: f64 = rule.probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(LmError::backend(format!(
                    "rule {i}: probabilities sum to {sum}, not 1"
                )));
            }
            if rule.probs.iter().any(|p| *p < 0.0) {
                return Err(LmError::backend(format!("rule {i}: negative probability")));
            }
        }
        let full = file.full_distribution.unwrap_or(!file.rules.is_empty());
        Ok(ScriptedLm {
            vocab: file.vocab,
            rules: file.rules,
            transcript: Mutex::new(file.transcript.into()),
            seed: file.seed,
            full_distribution: full,
            greedy_calls: AtomicUsize::new(0),
            complete_calls: AtomicUsize::new(0),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let file: ScriptedLmFile = serde_json::from_str(text)
            .map_err(|e| LmError::backend(format!("scripted backend file: {e}")))?;
        Self::from_spec(file)
    }

    pub fn from_file(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmError::backend(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn with_rules(vocab: Vec<&str>, rules: Vec<(&str, Vec<f64>)>) -> Self {
        Self::from_spec(ScriptedLmFile {
            vocab: vocab.into_iter().map(str::to_string).collect(),
            rules: rules
                .into_iter()
                .map(|(suffix, probs)| DistributionRule {
                    suffix: suffix.to_string(),
                    probs,
                })
                .collect(),
            ..Default::default()
        })
        .expect("test rules are well formed")
    }

    pub fn with_transcript(entries: Vec<(&str, &str)>) -> Self {
        Self::from_spec(ScriptedLmFile {
            transcript: entries
                .into_iter()
                .map(|(prefix, text)| TranscriptEntry {
                    prefix: prefix.to_string(),
                    text: text.to_string(),
                })
                .collect(),
            ..Default::default()
        })
        .expect("transcripts are well formed")
    }

    pub fn greedy_calls(&self) -> usize {
        self.greedy_calls.load(Ordering::SeqCst)
    }

    pub fn complete_calls(&self) -> usize {
        self.complete_calls.load(Ordering::SeqCst)
    }

    /// Entries left in the transcript queue.
    pub fn transcript_remaining(&self) -> usize {
        self.transcript.lock().unwrap().len()
    }

    /// Longest-suffix rule for the prompt, if any.
    fn rule_for(&self, prompt: &str) -> Option<&DistributionRule> {
        self.rules
            .iter()
            .filter(|r| prompt.ends_with(r.suffix.as_str()))
            .max_by_key(|r| r.suffix.len())
    }

    fn probs_for(&self, prompt: &str) -> Vec<f64> {
        match self.rule_for(prompt) {
            Some(rule) => rule.probs.clone(),
            None => vec![1.0 / self.vocab.len() as f64; self.vocab.len()],
        }
    }

    /// Complete via rules: walk token by token, argmax at temperature 0,
    /// otherwise sample with a prompt-derived generator.
    fn complete_from_rules(
        &self,
        prompt: &str,
        config: &SamplingConfig,
    ) -> Result<String, LmError> {
        if self.vocab.is_empty() {
            return Err(LmError::backend(
                "scripted backend has neither transcript entries nor a vocabulary",
            ));
        }
        let mut rng = self.rng_for(prompt);
        let mut text = prompt.to_string();
        let mut out = String::new();
        'outer: for _ in 0..config.max_tokens {
            let probs = self.probs_for(&text);
            let token = if config.temperature == 0.0 {
                argmax(&probs)
            } else {
                sample(&probs, config, &mut rng)
            };
            let piece = &self.vocab[token];
            out.push_str(piece);
            text.push_str(piece);
            for stop in &config.stop_sequences {
                if out.contains(stop.as_str()) {
                    break 'outer;
                }
            }
        }
        Ok(out)
    }

    fn rng_for(&self, prompt: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prompt.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// Temperature/top-k/top-p sampling over an explicit distribution.
fn sample(probs: &[f64], config: &SamplingConfig, rng: &mut ChaCha8Rng) -> usize {
    let mut weighted: Vec<(usize, f64)> = probs
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.max(1e-300).powf(1.0 / config.temperature)))
        .collect();
    weighted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    if let Some(k) = config.top_k {
        weighted.truncate(k.max(1));
    }
    if let Some(p) = config.top_p {
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        let mut keep = 0;
        for (i, (_, w)) in weighted.iter().enumerate() {
            acc += w / total;
            keep = i + 1;
            if acc >= p {
                break;
            }
        }
        weighted.truncate(keep.max(1));
    }
    let dist = rand::distributions::WeightedIndex::new(weighted.iter().map(|(_, w)| *w))
        .expect("non-empty weights");
    weighted[dist.sample(rng)].0
}

impl LmBackend for ScriptedLm {
    fn name(&self) -> &str {
        "scripted"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_full_distribution: self.full_distribution,
            supports_concurrent_calls: false,
        }
    }

    /// Greedy longest-match over the vocabulary.
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        if self.vocab.is_empty() {
            return Err(LmError::Tokenize {
                text: text.to_string(),
                reason: "scripted backend has no vocabulary".to_string(),
            });
        }
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let mut best: Option<(usize, usize)> = None; // (token, len)
            for (i, piece) in self.vocab.iter().enumerate() {
                if !piece.is_empty()
                    && rest.starts_with(piece.as_str())
                    && best.is_none_or(|(_, len)| piece.len() > len)
                {
                    best = Some((i, piece.len()));
                }
            }
            match best {
                Some((token, len)) => {
                    out.push(token as TokenId);
                    rest = &rest[len..];
                }
                None => {
                    return Err(LmError::Tokenize {
                        text: text.to_string(),
                        reason: format!("no vocabulary entry matches `{rest}`"),
                    })
                }
            }
        }
        Ok(out)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String, LmError> {
        let mut out = String::new();
        for t in tokens {
            let piece = self
                .vocab
                .get(*t as usize)
                .ok_or_else(|| LmError::backend(format!("token {t} out of vocabulary")))?;
            out.push_str(piece);
        }
        Ok(out)
    }

    fn greedy(&self, prompt: &str) -> Result<Vec<f64>, LmError> {
        if !self.full_distribution {
            return Err(LmError::Capability {
                backend: "scripted".to_string(),
                operation: "greedy (full distribution)",
            });
        }
        self.greedy_calls.fetch_add(1, Ordering::SeqCst);
        Ok(self
            .probs_for(prompt)
            .iter()
            .map(|p| p.max(1e-300).ln())
            .collect())
    }

    fn complete(&self, prompt: &str, config: &SamplingConfig) -> Result<String, LmError> {
        self.complete_calls.fetch_add(1, Ordering::SeqCst);
        let mut queue = self.transcript.lock().unwrap();
        if let Some(entry) = queue.front() {
            let last_line = prompt.rsplit('\n').next().unwrap_or(prompt);
            if !entry.prefix.is_empty() && !last_line.starts_with(entry.prefix.as_str()) {
                return Err(LmError::backend(format!(
                    "transcript expects a line starting `{}`, prompt ends `{last_line}`",
                    entry.prefix
                )));
            }
            let entry = queue.pop_front().expect("front checked");
            return Ok(entry.text);
        }
        drop(queue);
        self.complete_from_rules(prompt, config)
    }
}
