//! Chat-completion and embedding backends.
//!
//! `remote` talks to an OpenAI-compatible HTTP API. `heuristic` and `scripted`
//! run fully offline and never open a network connection; they embed with the
//! hashing embedder.

mod embed;
mod heuristic;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{fnv1a64, hash_embed, tokenize, EmbeddingVector, LOCAL_EMBEDDING_DIM, MIN_HASH_DIM};
pub use heuristic::{
    heuristic_correct, heuristic_drive, CHANGE_GAP_FACTOR, FREE_ROAD_GAP, SCENARIO_MARKER, TOP_SPEED,
    TTC_BRAKE, TTC_CHANGE_AHEAD, TTC_CHANGE_BEHIND,
};

use crate::reflection::ORIGINAL_HEADER;
use remote::RemoteClient;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("malformed scenario: {0}")]
    MalformedScenario(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Heuristic,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    /// Model for the embeddings endpoint; defaults to `model_name`.
    pub embedding_model: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Base delay before the first retry; doubled on each further retry.
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// Canned replies for the scripted backend, played back cyclically.
    pub script: Vec<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Heuristic,
            base_url: None,
            model_name: None,
            embedding_model: None,
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout_secs: 60.0,
            max_retries: 3,
            retry_backoff_ms: 500,
            max_in_flight: 4,
            temperature: 0.0,
            script: Vec::new(),
        }
    }
}

impl BackendConfig {
    pub fn heuristic() -> Self {
        Self::default()
    }

    pub fn scripted<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            script: replies.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn remote(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            base_url: Some(base_url.into()),
            model_name: Some(model.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidConfig(m.to_string()));
        match self.kind {
            BackendKind::Remote if self.base_url.is_none() || self.model_name.is_none() => {
                bad("remote backend requires base_url and model_name")
            }
            BackendKind::Scripted if self.script.is_empty() => bad("scripted backend needs at least one reply"),
            _ if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) => bad("timeout must be positive"),
            _ => Ok(()),
        }
    }
}

enum Inner {
    Remote(Box<RemoteClient>),
    Heuristic,
    Scripted(AtomicUsize),
}

/// A constructed backend. Safe to share across threads.
pub struct Backend {
    config: BackendConfig,
    inner: Inner,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend").field("config", &self.config).finish()
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    let bad = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
    match messages.first() {
        Some(m) if m.role == Role::System => {}
        _ => return bad("conversation must start with a system message"),
    }
    if messages[1..].iter().any(|m| m.role == Role::System) {
        return bad("only one system message is allowed");
    }
    if messages.iter().any(|m| m.content.is_empty()) {
        return bad("message content must be non-empty");
    }
    Ok(())
}

impl Backend {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let inner = match config.kind {
            BackendKind::Remote => Inner::Remote(Box::new(RemoteClient::new(&config)?)),
            BackendKind::Heuristic => Inner::Heuristic,
            BackendKind::Scripted => Inner::Scripted(AtomicUsize::new(0)),
        };
        Ok(Self { config, inner })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn is_local(&self) -> bool {
        !matches!(self.inner, Inner::Remote(_))
    }

    /// Sends a conversation and returns the assistant text, never empty.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        check_messages(messages)?;
        let reply = match &self.inner {
            Inner::Remote(client) => client.chat(messages)?,
            Inner::Heuristic => heuristic_reply(messages)?,
            Inner::Scripted(cursor) => {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                self.config.script[i % self.config.script.len()].clone()
            }
        };
        if reply.trim().is_empty() {
            return Err(GatewayError::MalformedResponse("empty completion".into()));
        }
        Ok(reply)
    }

    /// Chat plus the wall-clock latency of the call. Local backends report zero
    /// so that offline traces stay byte-reproducible.
    pub fn timed_chat(&self, messages: &[ChatMessage]) -> Result<(String, f64), GatewayError> {
        let start = Instant::now();
        let reply = self.chat(messages)?;
        let latency = if self.is_local() { 0.0 } else { start.elapsed().as_secs_f64() };
        Ok((reply, latency))
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::InvalidRequest("cannot embed empty text".into()));
        }
        match &self.inner {
            Inner::Remote(client) => client.embed(text),
            _ => Ok(hash_embed(text, LOCAL_EMBEDDING_DIM)),
        }
    }

    /// Embedding width when it is known without a request.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.is_local().then_some(LOCAL_EMBEDDING_DIM)
    }
}

/// The heuristic backend answers the last user message: a reflection request
/// gets a correction, a driving scenario gets a decision.
fn heuristic_reply(messages: &[ChatMessage]) -> Result<String, GatewayError> {
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .ok_or_else(|| GatewayError::InvalidRequest("no user message".into()))?;
    if last_user.content.contains(ORIGINAL_HEADER) {
        return heuristic_correct(&last_user.content);
    }
    if last_user.content.contains(SCENARIO_MARKER) {
        return heuristic_drive(&last_user.content);
    }
    // A follow-up such as a format reminder: answer the latest scenario.
    let scenario = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User && m.content.contains(SCENARIO_MARKER))
        .ok_or_else(|| GatewayError::MalformedScenario("no scenario in conversation".into()))?;
    heuristic_drive(&scenario.content)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convo(user: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user(user)]
    }

    #[test]
    fn scripted_plays_back() {
        let b = Backend::new(BackendConfig::scripted(["hello there"])).unwrap();
        assert_eq!(b.chat(&convo("x")).unwrap(), "hello there");
        assert_eq!(b.chat(&convo("y")).unwrap(), "hello there");
        let b = Backend::new(BackendConfig::scripted(["a", "b"])).unwrap();
        assert_eq!(b.chat(&convo("x")).unwrap(), "a");
        assert_eq!(b.chat(&convo("x")).unwrap(), "b");
        assert_eq!(b.chat(&convo("x")).unwrap(), "a");
    }

    #[test]
    fn empty_scripted_reply_is_malformed() {
        let b = Backend::new(BackendConfig::scripted(["  "])).unwrap();
        assert!(matches!(b.chat(&convo("x")), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn message_preconditions() {
        let b = Backend::new(BackendConfig::scripted(["ok"])).unwrap();
        assert!(b.chat(&[ChatMessage::user("x")]).is_err());
        assert!(b
            .chat(&[ChatMessage::system("a"), ChatMessage::system("b"), ChatMessage::user("x")])
            .is_err());
        assert!(b.chat(&[ChatMessage::system("a"), ChatMessage::user("")]).is_err());
    }

    #[test]
    fn remote_requires_url_and_model() {
        let mut cfg = BackendConfig::remote("http://localhost", "m");
        cfg.model_name = None;
        assert!(Backend::new(cfg).is_err());
        assert!(Backend::new(BackendConfig::scripted(Vec::<String>::new())).is_err());
    }

    #[test]
    fn local_embedding() {
        let b = Backend::new(BackendConfig::heuristic()).unwrap();
        let e = b.embed("some scene").unwrap();
        assert_eq!(e.dim(), 256);
        assert!((e.norm() - 1.0).abs() < 1e-9);
        assert_eq!(e, b.embed("some scene").unwrap());
        assert!(b.embed("").is_err());
        assert_eq!(b.embedding_dim(), Some(256));
    }

    #[test]
    fn heuristic_without_scenario_fails() {
        let b = Backend::new(BackendConfig::heuristic()).unwrap();
        assert!(matches!(b.chat(&convo("hi")), Err(GatewayError::MalformedScenario(_))));
    }
}
