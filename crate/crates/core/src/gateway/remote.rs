//! OpenAI-compatible HTTP client for chat completions and embeddings.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{BackendConfig, ChatMessage, EmbeddingVector, GatewayError};

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

#[derive(Deserialize)]
struct EmbeddingData {
    embedding: Vec<f64>,
}

pub(crate) struct RemoteClient {
    client: Client,
    base_url: String,
    model: String,
    embedding_model: String,
    api_key_env: String,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
    permits: Permits,
}

enum Attempt<T> {
    Done(T),
    Retry(GatewayError),
}

impl RemoteClient {
    pub(crate) fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let model = cfg.model_name.clone().unwrap_or_default();
        Ok(Self {
            client,
            base_url: cfg.base_url.clone().unwrap_or_default().trim_end_matches('/').to_string(),
            embedding_model: cfg.embedding_model.clone().unwrap_or_else(|| model.clone()),
            model,
            api_key_env: cfg.api_key_env.clone(),
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.retry_backoff_ms),
            permits: Permits::new(cfg.max_in_flight),
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Attempt<Result<R, GatewayError>> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.client.post(&url).json(body);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
        };
        let status = resp.status();
        if !status.is_success() {
            let err = GatewayError::Transport(format!("HTTP status {status}"));
            if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                return Attempt::Retry(err);
            }
            return Attempt::Done(Err(err));
        }
        Attempt::Done(resp.json::<R>().map_err(|e| GatewayError::MalformedResponse(e.to_string())))
    }

    fn with_retries<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, GatewayError> {
        let _permit = self.permits.acquire();
        let mut attempt = 0;
        loop {
            match self.post::<B, R>(path, body) {
                Attempt::Done(r) => return r,
                Attempt::Retry(err) if attempt < self.max_retries => {
                    let wait = self.backoff * 2u32.saturating_pow(attempt);
                    warn!(%err, attempt, ?wait, "retrying request to {path}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Attempt::Retry(err) => {
                    return Err(GatewayError::Transport(format!(
                        "{err} (gave up after {} retries)",
                        self.max_retries
                    )))
                }
            }
        }
    }

    pub(crate) fn chat(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: self.temperature,
        };
        let resp: ChatResponse = self.with_retries("/chat/completions", &body)?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        debug!(len = content.len(), "chat completion received");
        Ok(content)
    }

    pub(crate) fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let body = EmbeddingRequest {
            model: &self.embedding_model,
            input: text,
        };
        let resp: EmbeddingResponse = self.with_retries("/embeddings", &body)?;
        let values = resp
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| GatewayError::MalformedResponse("no embedding in response".into()))?;
        if values.is_empty() {
            return Err(GatewayError::MalformedResponse("empty embedding".into()));
        }
        Ok(EmbeddingVector::new(values))
    }
}
