use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::OrchestratorError;
use crate::relevance::{load_embedding_file, EmbedClient, RelevanceError, RelevanceScorer};
use crate::textproc::{TokenizeConfig, DEFAULT_SEPARATOR};

/// Iteration-count presets validated for the two benchmark styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Wq,
    Pq,
}

impl Preset {
    pub fn iterations(self) -> u32 {
        match self {
            Preset::Wq => 2,
            Preset::Pq => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_retry_limit() -> u32 {
    3
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            timeout_secs: default_timeout_secs(),
            retry_limit: default_retry_limit(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub forward: EndpointConfig,
    pub backward: EndpointConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerChoice {
    Lexical,
    EmbedFile,
    EmbedHttp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_url: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            kind: ScorerChoice::Lexical,
            embeddings: None,
            embed_url: None,
            max_in_flight: default_in_flight(),
        }
    }
}

impl ScorerConfig {
    /// Builds a cached scorer; relative paths resolve against `base`.
    pub fn build(&self, base: &Path, tokenizer: TokenizeConfig, timeout: Duration) -> Result<RelevanceScorer, RelevanceError> {
        let scorer = match self.kind {
            ScorerChoice::Lexical => RelevanceScorer::lexical(tokenizer),
            ScorerChoice::EmbedFile => {
                let path = self
                    .embeddings
                    .as_ref()
                    .ok_or_else(|| RelevanceError::Io("embed-file scorer needs an embeddings path".into()))?;
                RelevanceScorer::embedding_file(load_embedding_file(&base.join(path))?)
            }
            ScorerChoice::EmbedHttp => {
                let url = self
                    .embed_url
                    .as_ref()
                    .ok_or_else(|| RelevanceError::Io("embed-http scorer needs an embed_url".into()))?;
                RelevanceScorer::embedding_endpoint(
                    EmbedClient::new(url, timeout, default_retry_limit()).with_max_in_flight(self.max_in_flight),
                )
            }
        };
        Ok(scorer.with_cache())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_batch() -> usize {
    16
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            batch_size: default_batch(),
            max_in_flight: default_in_flight(),
        }
    }
}

fn default_k() -> usize {
    5
}

fn default_threshold() -> f64 {
    crate::metrics::DEFAULT_ALPHA
}

fn default_separator() -> String {
    DEFAULT_SEPARATOR.to_owned()
}

fn default_true() -> bool {
    true
}

/// Everything needed to drive one dual-training run.
///
/// Relative paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    pub epochs_per_phase: u32,
    /// Questions requested per instance when mining forward pseudo pairs.
    #[serde(default = "default_k")]
    pub k_generate: usize,
    /// Relevance gate for forward selection (inclusive).
    #[serde(default = "default_threshold")]
    pub alpha: f64,
    #[serde(default = "default_true")]
    pub alpha_inclusive: bool,
    /// Round-trip gate for backward selection (strict).
    #[serde(default = "default_threshold")]
    pub roundtrip_threshold: f64,
    #[serde(default)]
    pub roundtrip_inclusive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_separator")]
    pub separator: String,
    #[serde(default)]
    pub tokenizer: TokenizeConfig,
    pub instances: PathBuf,
    pub external_questions: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    /// Forwarded verbatim with every `/train` request.
    #[serde(default = "empty_object")]
    pub hparams: Value,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    pub endpoints: Endpoints,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, OrchestratorError> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let s = fs::read_to_string(path).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            OrchestratorError::Config(m) => OrchestratorError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
            .or(self.preset.map(Preset::iterations))
            .expect("validated")
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::Config(m.to_owned()));
        match self.iterations.or(self.preset.map(Preset::iterations)) {
            None => return bad("set `iterations` or `preset` (\"wq\" = 2, \"pq\" = 1)"),
            Some(0) => return bad("iterations must be at least 1"),
            _ => {}
        }
        if self.epochs_per_phase == 0 {
            return bad("epochs_per_phase must be at least 1");
        }
        if self.k_generate == 0 {
            return bad("k_generate must be at least 1");
        }
        if self.generation.batch_size == 0 || self.generation.max_in_flight == 0 {
            return bad("generation.batch_size and generation.max_in_flight must be positive");
        }
        if !self.hparams.is_object() {
            return bad("hparams must be a table");
        }
        Ok(())
    }

    /// Digest of every setting that influences produced artifacts plus the
    /// content of both data files. Endpoint locations and the run directory
    /// are excluded so a run can resume against relocated servers.
    pub fn digest(&self, base: &Path) -> Result<String, OrchestratorError> {
        let mut view = serde_json::to_value(self).expect("config serializes");
        let obj = view.as_object_mut().expect("object");
        obj.remove("endpoints");
        obj.remove("run_dir");
        obj.insert("iterations".into(), self.iterations().into());
        for (key, path) in [("instances", &self.instances), ("external_questions", &self.external_questions)] {
            let full = base.join(path);
            let bytes = fs::read(&full).map_err(|e| OrchestratorError::Config(format!("{}: {e}", full.display())))?;
            obj.insert(format!("{key}_sha256"), hex::encode(Sha256::digest(&bytes)).into());
        }
        let canonical = serde_json::to_vec(&view).expect("serializes");
        Ok(hex::encode(Sha256::digest(canonical)))
    }
}
