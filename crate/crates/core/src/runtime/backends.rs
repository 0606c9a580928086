//! Per-format backend bindings and their configuration file.
//!
//! Each format resolves to a backend instance plus a sampling configuration,
//! walking up the format hierarchy to the nearest binding. Choice (branch
//! selection) uses the `next` binding when present, else `text`. Backend
//! instances are shared: two formats bound to the same declaration talk to
//! one backend object.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::compile::FormatRegistry;
use crate::lm::{
    LmBackend, OpenAiCompatibleConfig, OpenAiCompatibleLm, SamplingConfig, ScriptedLm,
    ScriptedLmFile,
};

use super::RunError;

/// Built-in sampling defaults per native format; user formats inherit from
/// their parent chain.
pub fn default_sampling(format: &str) -> SamplingConfig {
    match format {
        "thought" => SamplingConfig::new(15, 1.0),
        "next" => SamplingConfig::new(16, 0.0),
        _ => SamplingConfig::new(20, 0.4),
    }
}

#[derive(Default, Clone)]
pub struct BackendSet {
    bindings: BTreeMap<String, (Arc<dyn LmBackend>, SamplingConfig)>,
}

impl BackendSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bind every format to one backend with per-format default sampling.
    pub fn uniform(backend: Arc<dyn LmBackend>, formats: &[&str]) -> Self {
        let mut set = Self::new();
        for format in formats {
            set.bind(format, backend.clone(), None);
        }
        set
    }

    pub fn bind(
        &mut self,
        format: &str,
        backend: Arc<dyn LmBackend>,
        sampling: Option<SamplingConfig>,
    ) {
        let sampling = sampling.unwrap_or_else(|| default_sampling(format));
        self.bindings.insert(format.to_string(), (backend, sampling));
    }

    /// Binding for a format, walking parents until one is found.
    pub fn resolve(
        &self,
        format: &str,
        registry: &FormatRegistry,
    ) -> Result<(&Arc<dyn LmBackend>, &SamplingConfig), RunError> {
        for name in registry.chain(format) {
            if let Some((backend, sampling)) = self.bindings.get(name) {
                return Ok((backend, sampling));
            }
        }
        Err(RunError::MissingBackend {
            format: format.to_string(),
        })
    }

    /// Backend used by the choice algorithm: `next`, else `text`.
    pub fn resolve_choice(
        &self,
        registry: &FormatRegistry,
    ) -> Result<(&Arc<dyn LmBackend>, &SamplingConfig), RunError> {
        self.resolve("next", registry)
            .or_else(|_| self.resolve("text", registry))
            .map_err(|_| RunError::MissingBackend {
                format: "next".to_string(),
            })
    }
}

/// On-disk configuration: named backend declarations plus format bindings.
///
/// ```json
/// {
///   "backends": {
///     "main": { "kind": "scripted", "path": "transcript.json" }
///   },
///   "formats": {
///     "text":     { "backend": "main", "sampling": { "max_tokens": 20, "temperature": 0.4 } },
///     "sentence": { "backend": "main", "sampling": { "max_tokens": 50, "temperature": 0.7 } }
///   }
/// }
/// ```
#[derive(Debug, Deserialize)]
pub struct BackendConfigFile {
    pub backends: BTreeMap<String, BackendDecl>,
    pub formats: BTreeMap<String, FormatBinding>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendDecl {
    Scripted {
        /// Path to a scripted-backend file, relative to this config file.
        #[serde(default)]
        path: Option<String>,
        /// Inline definition, alternative to `path`.
        #[serde(default)]
        spec: Option<ScriptedLmFile>,
    },
    OpenaiCompatible {
        #[serde(flatten)]
        config: OpenAiCompatibleConfig,
    },
}

#[derive(Debug, Deserialize)]
pub struct FormatBinding {
    pub backend: String,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
}

impl BackendSet {
    pub fn from_config_file(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config {
            reason: format!("{}: {e}", path.display()),
        })?;
        let config: BackendConfigFile =
            serde_json::from_str(&text).map_err(|e| RunError::Config {
                reason: format!("{}: {e}", path.display()),
            })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut instances: BTreeMap<String, Arc<dyn LmBackend>> = BTreeMap::new();
        for (name, decl) in &config.backends {
            let backend: Arc<dyn LmBackend> = match decl {
                BackendDecl::Scripted { path, spec } => match (path, spec) {
                    (Some(p), None) => Arc::new(ScriptedLm::from_file(&base.join(p))?),
                    (None, Some(spec)) => Arc::new(ScriptedLm::from_spec(spec.clone())?),
                    _ => {
                        return Err(RunError::Config {
                            reason: format!(
                                "backend `{name}`: exactly one of `path` or `spec` required"
                            ),
                        })
                    }
                },
                BackendDecl::OpenaiCompatible { config } => {
                    Arc::new(OpenAiCompatibleLm::new(config.clone())?)
                }
            };
            instances.insert(name.clone(), backend);
        }
        let mut set = BackendSet::new();
        for (format, binding) in &config.formats {
            let backend = instances.get(&binding.backend).ok_or_else(|| RunError::Config {
                reason: format!(
                    "format `{format}` refers to unknown backend `{}`",
                    binding.backend
                ),
            })?;
            set.bind(format, backend.clone(), binding.sampling.clone());
        }
        Ok(set)
    }
}
