//! In-process HTTP model server speaking the wire protocol, for tests,
//! examples and offline demos. No model weights involved.
//!
//! [`EchoRules`] documents the deterministic transforms the echo server
//! applies; [`Scripted`] returns canned outputs looked up by input text.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::protocol::{
    EmbedRequest, EmbedResponse, GenerateRequest, GenerateResponse, TrainRequest, TrainResponse, WirePair,
    STATUS_COMPLETED,
};
use crate::textproc::{tokenize_default, DEFAULT_SEPARATOR};

/// What the mock does for `/generate` and `/embed`.
pub trait MockBehavior: Send + Sync {
    fn generate(&self, input: &str, k: usize, seed: Option<u64>) -> Vec<String>;

    /// `None` means the role has no embedder and `/embed` answers 404.
    fn embed(&self, _text: &str) -> Option<Vec<f64>> {
        None
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn mix(text: &str, seed: Option<u64>, salt: usize) -> u64 {
    let mut bytes = text.as_bytes().to_vec();
    bytes.extend(seed.unwrap_or(0).to_le_bytes());
    bytes.extend((salt as u64).to_le_bytes());
    fnv1a(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoRole {
    /// Linearized subgraph → question.
    Forward,
    /// Question → linearized subgraph.
    Backward,
    Embedder,
}

/// Deterministic rule-based stand-in for a model server.
///
/// * **Backward** (question → source): the default tokens of the question
///   grouped three at a time and joined with ` </s> `; variant `i` rotates
///   the groups by `i`.
/// * **Forward** (source → question): the source's words without separators
///   and `?` appended. Variant 0 is garbled (every other word replaced by a
///   hash-derived filler) when the input/seed hash is divisible by 4, so
///   some round trips fail a relevance gate. Variant `i ≥ 1` drops word
///   `(i - 1) mod len` and appends `v{i}`.
/// * **Embedder**: hashed bag of words, [`EchoRules::EMBED_DIM`] buckets.
#[derive(Debug, Clone, Copy)]
pub struct EchoRules {
    pub role: EchoRole,
}

impl EchoRules {
    pub const EMBED_DIM: usize = 32;

    pub fn new(role: EchoRole) -> Self {
        EchoRules { role }
    }

    fn backward(input: &str, variant: usize) -> String {
        let toks = tokenize_default(input);
        let mut groups: Vec<String> = toks.tokens().chunks(3).map(|c| c.join(" ")).collect();
        if groups.is_empty() {
            groups.push("unknown".into());
        }
        let shift = variant % groups.len();
        groups.rotate_left(shift);
        groups.join(&format!(" {DEFAULT_SEPARATOR} "))
    }

    fn forward(input: &str, variant: usize, seed: Option<u64>) -> String {
        let mut words: Vec<String> = input
            .split_whitespace()
            .filter(|w| *w != DEFAULT_SEPARATOR)
            .map(str::to_owned)
            .collect();
        if words.is_empty() {
            words.push("what".into());
        }
        if variant == 0 {
            let h = mix(input, seed, 0);
            if h.is_multiple_of(4) {
                for (i, w) in words.iter_mut().enumerate() {
                    if i % 2 == 1 {
                        *w = format!("w{}", (h >> 8) % 97 + i as u64);
                    }
                }
            }
        } else {
            if words.len() > 1 {
                words.remove((variant - 1) % words.len());
            }
            words.push(format!("v{variant}"));
        }
        format!("{} ?", words.join(" "))
    }
}

impl MockBehavior for EchoRules {
    fn generate(&self, input: &str, k: usize, seed: Option<u64>) -> Vec<String> {
        (0..k)
            .map(|i| match self.role {
                EchoRole::Backward => Self::backward(input, i),
                EchoRole::Forward | EchoRole::Embedder => Self::forward(input, i, seed),
            })
            .collect()
    }

    fn embed(&self, text: &str) -> Option<Vec<f64>> {
        if self.role != EchoRole::Embedder {
            return None;
        }
        let mut v = vec![0.0; Self::EMBED_DIM];
        for t in tokenize_default(text).tokens() {
            v[(fnv1a(t.as_bytes()) % Self::EMBED_DIM as u64) as usize] += 1.0;
        }
        Some(v)
    }
}

/// Canned outputs keyed by exact input text; unknown inputs yield nothing.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    outputs: HashMap<String, Vec<String>>,
}

impl Scripted {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(mut self, input: impl Into<String>, outputs: &[&str]) -> Self {
        self.outputs.insert(input.into(), outputs.iter().map(|s| s.to_string()).collect());
        self
    }
}

impl MockBehavior for Scripted {
    fn generate(&self, input: &str, k: usize, _seed: Option<u64>) -> Vec<String> {
        self.outputs
            .get(input)
            .map(|o| o.iter().take(k).cloned().collect())
            .unwrap_or_default()
    }
}

#[derive(Default)]
struct Faults {
    /// Route prefix → (remaining failures, status).
    pending: Mutex<HashMap<String, (usize, u16)>>,
}

impl Faults {
    fn take(&self, path: &str) -> Option<u16> {
        let mut pending = self.pending.lock().unwrap();
        let (remaining, status) = pending.get_mut(path)?;
        if *remaining == 0 {
            return None;
        }
        *remaining -= 1;
        Some(*status)
    }
}

struct Shared {
    behavior: Arc<dyn MockBehavior>,
    spool: Option<PathBuf>,
    healthy: AtomicBool,
    faults: Faults,
    train_lock: Mutex<()>,
    train_calls: Mutex<Vec<TrainRequest>>,
    requests: AtomicUsize,
}

/// A running mock server bound to `127.0.0.1` on an ephemeral port.
pub struct MockServer {
    url: String,
    server: Arc<Server>,
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

impl MockServer {
    const WORKERS: usize = 4;

    pub fn start(behavior: Arc<dyn MockBehavior>) -> io::Result<Self> {
        Self::start_with_spool(behavior, None)
    }

    /// Like [`MockServer::start`], also writing each `/train` batch to
    /// `spool/train-NNNN.jsonl`.
    pub fn start_with_spool(behavior: Arc<dyn MockBehavior>, spool: Option<PathBuf>) -> io::Result<Self> {
        if let Some(dir) = &spool {
            fs::create_dir_all(dir)?;
        }
        let server = Server::http("127.0.0.1:0").map_err(|e| io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            behavior,
            spool,
            healthy: AtomicBool::new(true),
            faults: Faults::default(),
            train_lock: Mutex::new(()),
            train_calls: Mutex::new(Vec::new()),
            requests: AtomicUsize::new(0),
        });
        let workers = (0..Self::WORKERS)
            .map(|_| {
                let server = server.clone();
                let shared = shared.clone();
                std::thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        handle(&shared, req);
                    }
                })
            })
            .collect();
        Ok(MockServer {
            url: format!("http://{addr}"),
            server,
            shared,
            workers,
        })
    }

    pub fn echo(role: EchoRole) -> io::Result<Self> {
        Self::start(Arc::new(EchoRules::new(role)))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn set_healthy(&self, healthy: bool) {
        self.shared.healthy.store(healthy, Ordering::SeqCst);
    }

    /// The next `count` requests to `path` answer `status`.
    pub fn fail_next(&self, path: &str, count: usize, status: u16) {
        self.shared
            .faults
            .pending
            .lock()
            .unwrap()
            .insert(path.to_owned(), (count, status));
    }

    /// Every accepted `/train` request, in arrival order.
    pub fn train_calls(&self) -> Vec<TrainRequest> {
        self.shared.train_calls.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn json<T: Serialize>(status: u16, body: &T) -> Response<io::Cursor<Vec<u8>>> {
    let bytes = serde_json::to_vec(body).expect("serializable");
    Response::from_data(bytes)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").unwrap())
}

fn error(status: u16, detail: impl Into<String>) -> Response<io::Cursor<Vec<u8>>> {
    json(status, &serde_json::json!({ "error": detail.into() }))
}

fn handle(shared: &Shared, mut req: Request) {
    shared.requests.fetch_add(1, Ordering::SeqCst);
    let path = req.url().split('?').next().unwrap_or("").to_owned();
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        let _ = req.respond(error(400, "unreadable body"));
        return;
    }
    let resp = if let Some(status) = shared.faults.take(&path) {
        error(status, "injected fault")
    } else {
        route(shared, req.method(), &path, &body)
    };
    let _ = req.respond(resp);
}

fn route(shared: &Shared, method: &Method, path: &str, body: &str) -> Response<io::Cursor<Vec<u8>>> {
    match (method, path) {
        (Method::Get, "/health") => {
            if shared.healthy.load(Ordering::SeqCst) {
                json(200, &serde_json::json!({ "status": "ok" }))
            } else {
                error(503, "not ready")
            }
        }
        (Method::Post, "/generate") => {
            let req: GenerateRequest = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return error(400, e.to_string()),
            };
            if req.k == 0 {
                return error(400, "k must be positive");
            }
            let outputs = req
                .inputs
                .iter()
                .map(|i| shared.behavior.generate(i, req.k, req.seed))
                .collect();
            json(200, &GenerateResponse { outputs })
        }
        (Method::Post, "/train") => {
            let req: TrainRequest = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return error(400, e.to_string()),
            };
            if req.pairs.is_empty() {
                return error(400, "pairs must be non-empty");
            }
            let Ok(_guard) = shared.train_lock.try_lock() else {
                return error(409, "training already in progress");
            };
            let mut calls = shared.train_calls.lock().unwrap();
            if let Some(dir) = &shared.spool {
                let file = dir.join(format!("train-{:04}.jsonl", calls.len()));
                let lines: String = req
                    .pairs
                    .iter()
                    .map(|p: &WirePair| serde_json::to_string(p).unwrap() + "\n")
                    .collect();
                if let Err(e) = fs::write(&file, lines) {
                    return error(500, e.to_string());
                }
            }
            let steps = req.pairs.len() as u64;
            calls.push(req);
            json(
                200,
                &TrainResponse {
                    status: STATUS_COMPLETED.into(),
                    steps,
                },
            )
        }
        (Method::Post, "/embed") => {
            let req: EmbedRequest = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return error(400, e.to_string()),
            };
            let mut vectors = Vec::with_capacity(req.texts.len());
            for t in &req.texts {
                match shared.behavior.embed(t) {
                    Some(v) => vectors.push(v),
                    None => return error(404, "this server has no embedder"),
                }
            }
            let dim = vectors.first().map_or(EchoRules::EMBED_DIM, Vec::len);
            json(200, &EmbedResponse { vectors, dim })
        }
        _ => error(404, format!("no route for {method} {path}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_rules_are_deterministic_and_shaped() {
        let f = EchoRules::new(EchoRole::Forward);
        let a = f.generate("a r b </s> b s c", 3, Some(7));
        assert_eq!(a.len(), 3);
        assert_eq!(a, f.generate("a r b </s> b s c", 3, Some(7)));
        assert!(a.iter().all(|q| !q.contains("</s>")));
        assert!(a[1].ends_with("v1 ?"));

        let b = EchoRules::new(EchoRole::Backward);
        assert_eq!(b.generate("Who is the coach of it?", 1, None), vec!["who is the </s> coach of it"]);
        assert_eq!(b.generate("Who is the coach of it?", 2, None)[1], "coach of it </s> who is the");
    }

    #[test]
    fn embedder_only_for_embedder_role() {
        assert!(EchoRules::new(EchoRole::Forward).embed("x").is_none());
        let e = EchoRules::new(EchoRole::Embedder);
        assert_eq!(e.embed("a b").unwrap(), e.embed("A  b!").unwrap());
    }
}
