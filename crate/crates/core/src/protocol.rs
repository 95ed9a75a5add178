//! JSON bodies of the model-server and embedder wire protocol.
//!
//! ```text
//! POST /generate {"inputs": [str], "k": int, "seed": int|null} -> {"outputs": [[str]]}
//! POST /train    {"pairs": [{"source": str, "target": str}], "hparams": {..}}
//!                -> {"status": "completed", "steps": int}
//! POST /embed    {"texts": [str]} -> {"vectors": [[float]], "dim": int}
//! GET  /health   -> 200
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub inputs: Vec<String>,
    pub k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub outputs: Vec<Vec<String>>,
}

/// One supervised example as the model server sees it: input and output text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WirePair {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub pairs: Vec<WirePair>,
    #[serde(default)]
    pub hparams: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub status: String,
    pub steps: u64,
}

pub const STATUS_COMPLETED: &str = "completed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}
