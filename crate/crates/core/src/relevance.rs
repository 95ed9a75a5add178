//! Semantic relevance `R(a, b)` between two questions.
//!
//! Three backends share one contract: cosine similarity over embedding
//! vectors read from a JSONL table, cosine over vectors fetched from an
//! `/embed` endpoint, and a lexical stand-in using unigram count vectors.
//! The lexical backend is deterministic and offline but is not calibrated
//! against the 0.7 gate used for sentence embeddings.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{HttpError, JsonClient};
use crate::textproc::{tokenize, TokenizeConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelevanceError {
    #[error("cannot score empty text")]
    EmptyText,
    #[error("no embedding for text {0:?}")]
    MissingEmbedding(String),
    #[error("embedder endpoint failure (status {status:?}): {detail}")]
    EndpointFailure { status: Option<u16>, detail: String },
    #[error("text {0:?} maps to an all-zero vector")]
    ZeroVector(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("pair {index}: {source}")]
    AtPair {
        index: usize,
        #[source]
        source: Box<RelevanceError>,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine { path: String, line: usize, reason: String },
    #[error("{path}:{line}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: duplicate text {text:?}")]
    DuplicateText { path: String, line: usize, text: String },
    #[error("{0}")]
    Io(String),
}

impl From<HttpError> for RelevanceError {
    fn from(e: HttpError) -> Self {
        RelevanceError::EndpointFailure {
            status: e.status(),
            detail: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    EmbeddingFile,
    EmbeddingEndpoint,
    Lexical,
}

impl ScorerKind {
    pub fn is_embedding(self) -> bool {
        !matches!(self, ScorerKind::Lexical)
    }
}

/// Anything that can score the relevance of `a` to `b` in `[-1, 1]`.
///
/// Implementations must be deterministic for fixed inputs.
pub trait Relevance: Send + Sync {
    fn score(&self, a: &str, b: &str) -> Result<f64, RelevanceError>;

    fn kind(&self) -> ScorerKind;

    /// Element-wise `score`; the first failure aborts with its pair index.
    fn batch_score(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, RelevanceError> {
        if pairs.is_empty() {
            return Err(RelevanceError::EmptyBatch);
        }
        pairs
            .iter()
            .enumerate()
            .map(|(index, (a, b))| {
                self.score(a, b).map_err(|e| RelevanceError::AtPair {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity clamped to `[-1, 1]`; `None` if either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Text-keyed vectors loaded from `{"text": .., "vector": [..]}` lines.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vectors: HashMap<String, Arc<EmbeddingVector>>,
    dim: usize,
    fingerprint: String,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(text).map(Arc::as_ref)
    }

    /// SHA-256 of the file the table was read from.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingTable, RelevanceError> {
    #[derive(Deserialize)]
    struct Row {
        text: String,
        vector: Vec<f64>,
    }

    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| RelevanceError::Io(format!("{shown}: {e}")))?;
    let body = std::str::from_utf8(&bytes).map_err(|e| RelevanceError::Io(format!("{shown}: {e}")))?;
    let mut vectors = HashMap::new();
    let mut dim = None;
    for (idx, line) in body.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RelevanceError::MalformedLine {
            path: shown.clone(),
            line: line_no,
            reason,
        };
        let row: Row = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let expected = *dim.get_or_insert(row.vector.len());
        if row.vector.len() != expected {
            return Err(RelevanceError::DimensionMismatch {
                path: shown,
                line: line_no,
                expected,
                found: row.vector.len(),
            });
        }
        let v = EmbeddingVector::new(row.vector).ok_or_else(|| malformed("empty or non-finite vector".into()))?;
        if vectors.contains_key(&row.text) {
            return Err(RelevanceError::DuplicateText {
                path: shown,
                line: line_no,
                text: row.text,
            });
        }
        vectors.insert(row.text, Arc::new(v));
    }
    Ok(EmbeddingTable {
        vectors,
        dim: dim.unwrap_or(0),
        fingerprint: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Client for `POST /embed`.
#[derive(Debug)]
pub struct EmbedClient {
    http: JsonClient,
    max_in_flight: usize,
    batch_size: usize,
    dim: Mutex<Option<usize>>,
}

impl EmbedClient {
    pub fn new(base_url: &str, timeout: Duration, retry_limit: u32) -> Self {
        EmbedClient {
            http: JsonClient::new(base_url, timeout, retry_limit),
            max_in_flight: 4,
            batch_size: 64,
            dim: Mutex::new(None),
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn base_url(&self) -> &str {
        self.http.base_url()
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RelevanceError> {
        let resp: EmbedResponse = self.http.post_json("/embed", &EmbedRequest { texts })?;
        let bad = |detail: String| RelevanceError::EndpointFailure { status: None, detail };
        if resp.vectors.len() != texts.len() {
            return Err(bad(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        {
            let mut known = self.dim.lock().unwrap();
            let expected = *known.get_or_insert(resp.dim);
            if resp.dim != expected {
                return Err(bad(format!("dim changed from {expected} to {}", resp.dim)));
            }
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != resp.dim {
                    return Err(bad(format!("vector of length {} with dim {}", v.len(), resp.dim)));
                }
                EmbeddingVector::new(v).ok_or_else(|| bad("non-finite vector".into()))
            })
            .collect()
    }

    /// Embeds `texts` in order, with at most `max_in_flight` concurrent requests.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, (usize, RelevanceError)> {
        let chunks: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        type Slot = Mutex<Option<Result<Vec<EmbeddingVector>, RelevanceError>>>;
        let results: Vec<Slot> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(chunks.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    *results[i].lock().unwrap() = Some(self.embed_chunk(chunks[i]));
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for (i, slot) in results.into_iter().enumerate() {
            match slot.into_inner().unwrap().expect("every chunk visited") {
                Ok(vs) => out.extend(vs),
                Err(e) => return Err((i * self.batch_size, e)),
            }
        }
        Ok(out)
    }
}

enum Backend {
    Lexical(TokenizeConfig),
    File(Arc<EmbeddingTable>),
    Endpoint(EmbedClient),
}

type CacheKey = (String, String);

/// The concrete scorer used by the CLI and orchestrator.
pub struct RelevanceScorer {
    backend: Backend,
    fingerprint: String,
    cache: Option<Mutex<HashMap<CacheKey, Arc<EmbeddingVector>>>>,
}

impl std::fmt::Debug for RelevanceScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RelevanceScorer")
            .field("kind", &self.kind())
            .field("fingerprint", &self.fingerprint)
            .field("cache", &self.cache.is_some())
            .finish()
    }
}

impl RelevanceScorer {
    pub fn lexical(config: TokenizeConfig) -> Self {
        RelevanceScorer {
            fingerprint: format!("lexical:{}:{}", config.lowercase, config.strip_punct),
            backend: Backend::Lexical(config),
            cache: None,
        }
    }

    pub fn embedding_file(table: EmbeddingTable) -> Self {
        RelevanceScorer {
            fingerprint: format!("file:{}", table.fingerprint()),
            backend: Backend::File(Arc::new(table)),
            cache: None,
        }
    }

    pub fn embedding_endpoint(client: EmbedClient) -> Self {
        RelevanceScorer {
            fingerprint: format!("endpoint:{}", client.base_url()),
            backend: Backend::Endpoint(client),
            cache: None,
        }
    }

    /// Memoizes embeddings by `(fingerprint, text)`. No effect on lexical scorers.
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn cached_len(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.lock().unwrap().len())
    }

    fn cache_get(&self, text: &str) -> Option<Arc<EmbeddingVector>> {
        let cache = self.cache.as_ref()?;
        cache
            .lock()
            .unwrap()
            .get(&(self.fingerprint.clone(), text.to_owned()))
            .cloned()
    }

    fn cache_put(&self, text: &str, v: Arc<EmbeddingVector>) {
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().insert((self.fingerprint.clone(), text.to_owned()), v);
        }
    }

    fn embed_one(&self, text: &str) -> Result<Arc<EmbeddingVector>, RelevanceError> {
        if let Some(v) = self.cache_get(text) {
            return Ok(v);
        }
        let v = match &self.backend {
            Backend::File(table) => table
                .vectors
                .get(text)
                .cloned()
                .ok_or_else(|| RelevanceError::MissingEmbedding(text.to_owned()))?,
            Backend::Endpoint(client) => {
                Arc::new(client.embed(&[text]).map_err(|(_, e)| e)?.pop().expect("one vector"))
            }
            Backend::Lexical(_) => unreachable!("lexical scorer has no embeddings"),
        };
        self.cache_put(text, v.clone());
        Ok(v)
    }

    fn embedding_cosine(a: (&str, &EmbeddingVector), b: (&str, &EmbeddingVector)) -> Result<f64, RelevanceError> {
        if a.1.dim() != b.1.dim() {
            return Err(RelevanceError::EndpointFailure {
                status: None,
                detail: format!("dimension {} vs {}", a.1.dim(), b.1.dim()),
            });
        }
        match cosine(a.1.values(), b.1.values()) {
            Some(c) => Ok(c),
            None => {
                let zero = if a.1.values().iter().all(|v| *v == 0.0) { a.0 } else { b.0 };
                Err(RelevanceError::ZeroVector(zero.to_owned()))
            }
        }
    }

    fn lexical_score(config: &TokenizeConfig, a: &str, b: &str) -> Result<f64, RelevanceError> {
        let counts = |s: &str| -> Result<HashMap<String, u64>, RelevanceError> {
            let mut m = HashMap::new();
            for t in tokenize(s, config).tokens() {
                *m.entry(t.clone()).or_insert(0u64) += 1;
            }
            if m.is_empty() {
                return Err(RelevanceError::ZeroVector(s.to_owned()));
            }
            Ok(m)
        };
        let (ca, cb) = (counts(a)?, counts(b)?);
        let dot: u64 = ca.iter().map(|(t, n)| n * cb.get(t).copied().unwrap_or(0)).sum();
        let na: u64 = ca.values().map(|n| n * n).sum();
        let nb: u64 = cb.values().map(|n| n * n).sum();
        // Integer norms keep score(x, x) exactly 1 and the result symmetric.
        Ok((dot as f64 / ((na * nb) as f64).sqrt()).clamp(-1.0, 1.0))
    }
}

impl Relevance for RelevanceScorer {
    fn score(&self, a: &str, b: &str) -> Result<f64, RelevanceError> {
        if a.trim().is_empty() || b.trim().is_empty() {
            return Err(RelevanceError::EmptyText);
        }
        match &self.backend {
            Backend::Lexical(cfg) => Self::lexical_score(cfg, a, b),
            _ => {
                let va = self.embed_one(a)?;
                let vb = self.embed_one(b)?;
                Self::embedding_cosine((a, &va), (b, &vb))
            }
        }
    }

    fn kind(&self) -> ScorerKind {
        match self.backend {
            Backend::Lexical(_) => ScorerKind::Lexical,
            Backend::File(_) => ScorerKind::EmbeddingFile,
            Backend::Endpoint(_) => ScorerKind::EmbeddingEndpoint,
        }
    }

    fn batch_score(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, RelevanceError> {
        if pairs.is_empty() {
            return Err(RelevanceError::EmptyBatch);
        }
        let at = |index: usize, e: RelevanceError| RelevanceError::AtPair {
            index,
            source: Box::new(e),
        };
        let Backend::Endpoint(client) = &self.backend else {
            return pairs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| self.score(a, b).map_err(|e| at(i, e)))
                .collect();
        };

        // Fetch every distinct uncached text in one bounded fan-out.
        let mut local: HashMap<&str, Arc<EmbeddingVector>> = HashMap::new();
        let mut missing: Vec<&str> = Vec::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            for t in [*a, *b] {
                if t.trim().is_empty() {
                    return Err(at(i, RelevanceError::EmptyText));
                }
                if local.contains_key(t) || missing.contains(&t) {
                    continue;
                }
                match self.cache_get(t) {
                    Some(v) => {
                        local.insert(t, v);
                    }
                    None => missing.push(t),
                }
            }
        }
        if !missing.is_empty() {
            let vectors = client.embed(&missing).map_err(|(offset, e)| {
                let culprit = missing[offset];
                let index = pairs
                    .iter()
                    .position(|(a, b)| *a == culprit || *b == culprit)
                    .unwrap_or(0);
                at(index, e)
            })?;
            for (t, v) in missing.iter().zip(vectors) {
                let v = Arc::new(v);
                self.cache_put(t, v.clone());
                local.insert(t, v);
            }
        }
        pairs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| Self::embedding_cosine((a, &local[a]), (b, &local[b])).map_err(|e| at(i, e)))
            .collect()
    }
}
