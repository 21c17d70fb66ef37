//! Uniform access to chat-completion endpoints.
//!
//! Two gateways implement [`ChatGateway`]: a live OpenAI-compatible HTTP
//! client with retries and a persistent response cache, and a scripted
//! playback gateway that answers from a JSONL transcript so whole benchmark
//! runs replay offline.

mod cache;
mod http;
mod playback;

pub use cache::DiskCache;
pub use http::{HttpGateway, RetryPolicy, ScriptRecorder};
pub use playback::{PlaybackGateway, ScriptEntry, ScriptMatch};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::TokenUsage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

/// A chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LMRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub want_logprobs: bool,
    pub max_output_tokens: Option<u32>,
}

impl LMRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature,
            want_logprobs: false,
            max_output_tokens: None,
        }
    }

    pub fn with_logprobs(mut self) -> Self {
        self.want_logprobs = true;
        self
    }

    /// All message contents joined in order, used by substring matchers.
    pub fn prompt_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(m.role.as_str());
            out.push_str(": ");
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }
}

/// Model output plus provider-reported usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
    pub token_logprobs: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("playback exhausted: {0}")]
    PlaybackExhausted(String),
    #[error("playback script load error at line {line}: {message}")]
    ScriptLoad { line: usize, message: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl GatewayError {
    /// True for errors that must abort the current question.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::Transport(_)
                | GatewayError::Provider(_)
                | GatewayError::PlaybackExhausted(_)
        )
    }
}

/// A chat-completion backend. Shared across threads by the harness.
pub trait ChatGateway: Send + Sync {
    fn complete_chat(&self, req: &LMRequest) -> Result<Completion, GatewayError>;

    /// Usage accumulated across provider calls; cache hits and failed
    /// attempts are never counted.
    fn recorded_usage(&self) -> TokenUsage;
}

/// Pass-through gateway that keeps a copy of every request it forwards.
/// Handy for asserting on prompt construction.
pub struct RecordingGateway<G> {
    inner: G,
    requests: std::sync::Mutex<Vec<LMRequest>>,
}

impl<G: ChatGateway> RecordingGateway<G> {
    pub fn new(inner: G) -> Self {
        Self { inner, requests: std::sync::Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<LMRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn into_inner(self) -> G {
        self.inner
    }
}

impl<G: ChatGateway> ChatGateway for RecordingGateway<G> {
    fn complete_chat(&self, req: &LMRequest) -> Result<Completion, GatewayError> {
        self.requests.lock().unwrap().push(req.clone());
        self.inner.complete_chat(req)
    }

    fn recorded_usage(&self) -> TokenUsage {
        self.inner.recorded_usage()
    }
}

/// Deterministic content hash of a request.
///
/// Covers the model, ordered messages, temperature, logprob flag, and output
/// cap, so any two byte-identical requests collide and nothing else does.
pub fn cache_key(req: &LMRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"model\0");
    hasher.update(req.model.as_bytes());
    hasher.update(b"\0temperature\0");
    hasher.update(req.temperature.to_bits().to_le_bytes());
    hasher.update(b"\0want_logprobs\0");
    hasher.update([req.want_logprobs as u8]);
    hasher.update(b"\0max_output_tokens\0");
    match req.max_output_tokens {
        Some(n) => hasher.update(n.to_le_bytes()),
        None => hasher.update(b"none"),
    }
    for message in &req.messages {
        hasher.update(b"\0message\0");
        hasher.update(message.role.as_str().as_bytes());
        hasher.update(b"\0");
        hasher.update(message.content.as_bytes());
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Probability of the least-confident generated token: `exp(min logprob)`.
pub fn min_token_confidence(completion: &Completion) -> Result<f64, GatewayError> {
    let logprobs = completion
        .token_logprobs
        .as_ref()
        .ok_or_else(|| GatewayError::Precondition("completion has no token logprobs".into()))?;
    if logprobs.is_empty() {
        return Err(GatewayError::Precondition("token logprobs are empty".into()));
    }
    let min = logprobs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(min.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> LMRequest {
        LMRequest::new(
            "test-model",
            vec![ChatMessage::system("be terse"), ChatMessage::user("hello")],
            0.7,
        )
    }

    #[test]
    fn cache_key_is_deterministic() {
        assert_eq!(cache_key(&request()), cache_key(&request()));
    }

    #[test]
    fn cache_key_changes_with_temperature() {
        let mut other = request();
        other.temperature = 0.0;
        assert_ne!(cache_key(&request()), cache_key(&other));
    }

    #[test]
    fn cache_key_changes_with_message_order() {
        let mut other = request();
        other.messages.reverse();
        assert_ne!(cache_key(&request()), cache_key(&other));
    }

    #[test]
    fn min_confidence_takes_the_minimum() {
        let completion = Completion {
            text: "x".into(),
            usage: TokenUsage::default(),
            token_logprobs: Some(vec![0.9f64.ln(), 0.95f64.ln()]),
        };
        let conf = min_token_confidence(&completion).unwrap();
        assert!((conf - 0.9).abs() < 1e-12);

        let completion = Completion {
            text: "x".into(),
            usage: TokenUsage::default(),
            token_logprobs: Some(vec![0.5f64.ln(), 0.99f64.ln(), 0.7f64.ln()]),
        };
        let conf = min_token_confidence(&completion).unwrap();
        assert!((conf - 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_confidence_rejects_empty_logprobs() {
        let completion = Completion {
            text: "x".into(),
            usage: TokenUsage::default(),
            token_logprobs: Some(vec![]),
        };
        assert!(matches!(
            min_token_confidence(&completion),
            Err(GatewayError::Precondition(_))
        ));
        let completion = Completion {
            text: "x".into(),
            usage: TokenUsage::default(),
            token_logprobs: None,
        };
        assert!(min_token_confidence(&completion).is_err());
    }
}
