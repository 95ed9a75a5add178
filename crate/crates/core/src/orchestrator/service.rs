use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::EndpointConfig;
use crate::http::{HttpError, JsonClient};
use crate::protocol::{GenerateRequest, GenerateResponse, TrainRequest, TrainResponse, WirePair, STATUS_COMPLETED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Graph → question.
    Forward,
    /// Question → graph.
    Backward,
    Embedder,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Forward => "forward",
            Role::Backward => "backward",
            Role::Embedder => "embedder",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainReceipt {
    pub steps: u64,
}

/// A remote seq2seq model the loop can query and fine-tune.
pub trait ModelService: Send + Sync {
    fn role(&self) -> Role;

    fn health(&self) -> Result<(), HttpError>;

    /// Up to `k` outputs per input, in input order.
    fn generate(&self, inputs: &[String], k: usize, seed: Option<u64>) -> Result<Vec<Vec<String>>, HttpError>;

    fn train(&self, pairs: &[WirePair], hparams: &Value) -> Result<TrainReceipt, HttpError>;
}

/// A model server reached over HTTP.
#[derive(Debug)]
pub struct HttpModel {
    role: Role,
    client: JsonClient,
}

impl HttpModel {
    pub fn new(role: Role, endpoint: &EndpointConfig) -> Self {
        HttpModel {
            role,
            client: JsonClient::new(&endpoint.base_url, endpoint.timeout(), endpoint.retry_limit),
        }
    }

    pub fn base_url(&self) -> &str {
        self.client.base_url()
    }
}

impl ModelService for HttpModel {
    fn role(&self) -> Role {
        self.role
    }

    fn health(&self) -> Result<(), HttpError> {
        self.client.get_ok("/health")
    }

    fn generate(&self, inputs: &[String], k: usize, seed: Option<u64>) -> Result<Vec<Vec<String>>, HttpError> {
        let req = GenerateRequest {
            inputs: inputs.to_vec(),
            k,
            seed,
        };
        let resp: GenerateResponse = self.client.post_json("/generate", &req)?;
        let bad = |detail: String| HttpError::Decode {
            url: format!("{}/generate", self.client.base_url()),
            detail,
        };
        if resp.outputs.len() != inputs.len() {
            return Err(bad(format!("{} inputs but {} outputs", inputs.len(), resp.outputs.len())));
        }
        if let Some(o) = resp.outputs.iter().find(|o| o.len() > k) {
            return Err(bad(format!("{} outputs for k = {k}", o.len())));
        }
        if resp.outputs.iter().flatten().any(|s| s.trim().is_empty()) {
            return Err(bad("blank generated text".into()));
        }
        Ok(resp.outputs)
    }

    fn train(&self, pairs: &[WirePair], hparams: &Value) -> Result<TrainReceipt, HttpError> {
        let req = TrainRequest {
            pairs: pairs.to_vec(),
            hparams: hparams.clone(),
        };
        let resp: TrainResponse = self.client.post_json("/train", &req)?;
        if resp.status != STATUS_COMPLETED {
            return Err(HttpError::Decode {
                url: format!("{}/train", self.client.base_url()),
                detail: format!("status {:?}", resp.status),
            });
        }
        Ok(TrainReceipt { steps: resp.steps })
    }
}

/// Splits `inputs` into batches and generates with at most `max_in_flight`
/// concurrent requests. Results come back in input order.
pub fn generate_all(
    service: &dyn ModelService,
    inputs: &[String],
    k: usize,
    seed: Option<u64>,
    batch_size: usize,
    max_in_flight: usize,
) -> Result<Vec<Vec<String>>, HttpError> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let chunks: Vec<&[String]> = inputs.chunks(batch_size.max(1)).collect();
    type Slot = Mutex<Option<Result<Vec<Vec<String>>, HttpError>>>;
    let slots: Vec<Slot> = chunks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..max_in_flight.clamp(1, chunks.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(chunk) = chunks.get(i) else { break };
                *slots[i].lock().unwrap() = Some(service.generate(chunk, k, seed));
            });
        }
    });
    let mut out = Vec::with_capacity(inputs.len());
    for slot in slots {
        out.extend(slot.into_inner().unwrap().expect("chunk visited")?);
    }
    Ok(out)
}
