//! Blocking JSON-over-HTTP client shared by the model and embedder endpoints.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("{url}: transport error: {detail}")]
    Transport { url: String, detail: String },
    #[error("{url}: HTTP {status}: {detail}")]
    Status {
        url: String,
        status: u16,
        detail: String,
    },
    #[error("{url}: unexpected response body: {detail}")]
    Decode { url: String, detail: String },
}

impl HttpError {
    pub fn status(&self) -> Option<u16> {
        match self {
            HttpError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    base_url: String,
    retry_limit: u32,
    backoff: Duration,
}

impl JsonClient {
    pub fn new(base_url: &str, timeout: Duration, retry_limit: u32) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        JsonClient {
            agent,
            base_url: base_url.trim_end_matches('/').to_owned(),
            retry_limit,
            backoff: Duration::from_millis(50),
        }
    }

    /// First retry waits this long, doubling each attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    fn retryable(err: &HttpError) -> bool {
        match err {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => *status >= 500 || *status == 429,
            HttpError::Decode { .. } => false,
        }
    }

    fn with_retries<T>(&self, mut attempt: impl FnMut() -> Result<T, HttpError>) -> Result<T, HttpError> {
        let mut wait = self.backoff;
        let mut tries = 0;
        loop {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) if tries < self.retry_limit && Self::retryable(&e) => {
                    log::warn!("{e}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                    wait *= 2;
                    tries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn classify(url: &str, err: ureq::Error) -> HttpError {
        match err {
            ureq::Error::Status(status, resp) => HttpError::Status {
                url: url.to_owned(),
                status,
                detail: resp.into_string().unwrap_or_default(),
            },
            ureq::Error::Transport(t) => HttpError::Transport {
                url: url.to_owned(),
                detail: t.to_string(),
            },
        }
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, HttpError> {
        let url = self.url(path);
        let payload = serde_json::to_value(body).map_err(|e| HttpError::Decode {
            url: url.clone(),
            detail: e.to_string(),
        })?;
        // Decoding happens outside the retry loop: a 2xx is final.
        let resp = self.with_retries(|| {
            self.agent
                .post(&url)
                .send_json(payload.clone())
                .map_err(|e| Self::classify(&url, e))
        })?;
        resp.into_json::<R>().map_err(|e| HttpError::Decode {
            url: url.clone(),
            detail: e.to_string(),
        })
    }

    pub fn get_ok(&self, path: &str) -> Result<(), HttpError> {
        let url = self.url(path);
        self.with_retries(|| self.agent.get(&url).call().map_err(|e| Self::classify(&url, e)))?;
        Ok(())
    }
}
