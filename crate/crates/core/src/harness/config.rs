//! TOML run configuration. Relative paths are resolved against the
//! directory holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::fusion::{AlphaOverrides, FusionParams};
use crate::gateway::remote::RetryPolicy;
use crate::gateway::{Backend, MockBackend, MockScript, RemoteBackend, RemoteConfig, RemoteKind};
use crate::probegen::{
    default_templates, load_templates, validate_templates, InteractionMode, ProbeTemplate, RenderOptions,
    DEFAULT_MAX_DOCUMENT_CHARS, QA_INSTRUCTION,
};
use crate::resolver::{ResolutionRules, Resolver};
use crate::retrieval::{Embedder, HashingEmbedder, RemoteEmbedder, HASHING_DIM};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendSection,
    pub probes: ProbeSection,
    pub resolver: ResolverSection,
    pub fusion: FusionSection,
    pub retrieval: RetrievalSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[serde(alias = "scripted_mock")]
    Mock,
    #[serde(alias = "remote_chat")]
    Chat,
    #[serde(alias = "remote_completion")]
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendChoice,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Environment variable holding the API key. The key itself never
    /// appears in config files, logs or reports.
    pub auth_env: Option<String>,
    /// Mock script (JSON) for the `mock` backend.
    pub script: Option<PathBuf>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_requests_per_second: Option<f64>,
    pub timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendChoice::Mock,
            endpoint: None,
            model_name: None,
            temperature: 1.0,
            max_tokens: 64,
            auth_env: None,
            script: None,
            max_retries: 3,
            backoff_base_ms: 1000,
            max_requests_per_second: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub mode: InteractionMode,
    pub template_file: Option<PathBuf>,
    /// Inline templates; take precedence over `template_file`.
    pub templates: Option<Vec<ProbeTemplate>>,
    pub max_document_chars: usize,
    pub qa_instruction: String,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            mode: InteractionMode::QuestionAnswer,
            template_file: None,
            templates: None,
            max_document_chars: DEFAULT_MAX_DOCUMENT_CHARS,
            qa_instruction: QA_INSTRUCTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolverSection {
    pub rules_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub alpha: f64,
    pub alpha_overrides: AlphaOverrides,
    pub k_samples: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        let p = FusionParams::default();
        FusionSection {
            alpha: p.alpha,
            alpha_overrides: p.overrides,
            k_samples: p.samples_per_probe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderChoice {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub embedder: EmbedderChoice,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub auth_env: Option<String>,
    pub top_n: usize,
    pub store_path: Option<PathBuf>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            embedder: EmbedderChoice::Hashing,
            dim: HASHING_DIM,
            endpoint: None,
            model_name: None,
            auth_env: None,
            top_n: 10,
            store_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Overrides the mock script's seed when set.
    pub seed: Option<u64>,
    pub parallelism: usize,
    pub transcript_path: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: None,
            parallelism: 4,
            transcript_path: None,
        }
    }
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Config = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut config: Config = toml::from_str(&text).map_err(|e| HarnessError::parse(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        resolve(base, &mut config.backend.script);
        resolve(base, &mut config.probes.template_file);
        resolve(base, &mut config.resolver.rules_file);
        resolve(base, &mut config.retrieval.store_path);
        resolve(base, &mut config.run.transcript_path);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.fusion_params().validate()?;
        if self.fusion.k_samples == 0 {
            return Err(HarnessError::Config("fusion.k_samples must be at least 1".into()));
        }
        if self.run.parallelism == 0 {
            return Err(HarnessError::Config("run.parallelism must be at least 1".into()));
        }
        if self.retrieval.top_n == 0 {
            return Err(HarnessError::Config("retrieval.top_n must be at least 1".into()));
        }
        if !(self.backend.temperature.is_finite() && self.backend.temperature >= 0.0) {
            return Err(HarnessError::Config("backend.temperature must be non-negative".into()));
        }
        Ok(())
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams {
            alpha: self.fusion.alpha,
            overrides: self.fusion.alpha_overrides,
            samples_per_probe: self.fusion.k_samples,
        }
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            max_document_chars: self.probes.max_document_chars,
            qa_instruction: self.probes.qa_instruction.clone(),
        }
    }

    pub fn templates(&self) -> Result<Vec<ProbeTemplate>, HarnessError> {
        let templates = match (&self.probes.templates, &self.probes.template_file) {
            (Some(inline), _) => inline.clone(),
            (None, Some(path)) => load_templates(path)?,
            (None, None) => default_templates(self.probes.mode),
        };
        validate_templates(&templates)?;
        Ok(templates)
    }

    pub fn resolver(&self) -> Result<Resolver, HarnessError> {
        let rules = match &self.resolver.rules_file {
            Some(path) => ResolutionRules::load(path)?,
            None => ResolutionRules::default(),
        };
        Ok(Resolver::new(&rules)?)
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.backend.max_retries,
            backoff_base_ms: self.backend.backoff_base_ms,
        }
    }

    /// Builds the configured LLM backend. The mock backend needs a script.
    pub fn backend(&self) -> Result<Arc<dyn Backend>, HarnessError> {
        let b = &self.backend;
        let remote_kind = match b.kind {
            BackendChoice::Mock => {
                let path = b
                    .script
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("backend.script is required for the mock backend".into()))?;
                let mut backend = MockBackend::new(MockScript::load(path)?)?;
                if let Some(seed) = self.run.seed {
                    backend = backend.with_seed(seed);
                }
                return Ok(Arc::new(backend));
            }
            BackendChoice::Chat => RemoteKind::Chat,
            BackendChoice::Completion => RemoteKind::Completion,
        };
        let (Some(endpoint), Some(model_name)) = (&b.endpoint, &b.model_name) else {
            return Err(HarnessError::Config(
                "backend.endpoint and backend.model_name are required for remote backends".into(),
            ));
        };
        let mut remote = RemoteConfig::new(remote_kind, endpoint.clone(), model_name.clone());
        remote.temperature = b.temperature;
        remote.max_tokens = b.max_tokens;
        remote.auth_env = b.auth_env.clone();
        remote.retry = self.retry_policy();
        remote.max_requests_per_second = b.max_requests_per_second;
        remote.timeout_secs = b.timeout_secs;
        Ok(Arc::new(RemoteBackend::new(remote)?))
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>, HarnessError> {
        let r = &self.retrieval;
        match r.embedder {
            EmbedderChoice::Hashing => Ok(Box::new(HashingEmbedder::with_dim(r.dim))),
            EmbedderChoice::Remote => {
                let (Some(endpoint), Some(model_name)) = (&r.endpoint, &r.model_name) else {
                    return Err(HarnessError::Config(
                        "retrieval.endpoint and retrieval.model_name are required for the remote embedder".into(),
                    ));
                };
                Ok(Box::new(RemoteEmbedder::new(
                    endpoint.clone(),
                    model_name.clone(),
                    r.auth_env.clone(),
                    self.retry_policy(),
                )?))
            }
        }
    }
}
