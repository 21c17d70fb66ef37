//! HTTP transport with record/replay support.
//!
//! Retrieval backends speak through [`HttpTransport`] so every live call can
//! be captured to a fixture file and replayed offline. A fixture line is
//! `{url, params, response_body, status}`; POST bodies travel under the
//! reserved `_body` param key.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Param key carrying a JSON body; its presence turns a request into a POST.
pub const BODY_PARAM: &str = "_body";

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("http error: {0}")]
    Http(String),
    #[error("no fixture recorded for {0}")]
    NoFixture(String),
    #[error("fixture load error at line {line}: {message}")]
    FixtureLoad { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

pub trait HttpTransport: Send + Sync {
    fn request(
        &self,
        url: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<HttpReply, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FixtureEntry {
    url: String,
    params: BTreeMap<String, String>,
    response_body: String,
    status: u16,
}

/// Captures live request/response pairs as fixture JSONL. Any string in
/// `redact` (API keys) is blanked before writing.
pub struct FixtureRecorder {
    sink: Mutex<std::fs::File>,
    redact: Vec<String>,
}

impl FixtureRecorder {
    pub fn create(path: impl AsRef<Path>, redact: Vec<String>) -> std::io::Result<Self> {
        if let Some(parent) = path.as_ref().parent() {
            fs::create_dir_all(parent)?;
        }
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { sink: Mutex::new(file), redact })
    }

    fn scrub(&self, text: &str) -> String {
        let mut out = text.to_string();
        for secret in &self.redact {
            if !secret.is_empty() {
                out = out.replace(secret, "REDACTED");
            }
        }
        out
    }

    fn record(&self, url: &str, params: &BTreeMap<String, String>, reply: &HttpReply) {
        let entry = FixtureEntry {
            url: self.scrub(url),
            params: params
                .iter()
                .map(|(k, v)| (k.clone(), self.scrub(v)))
                .collect(),
            response_body: self.scrub(&reply.body),
            status: reply.status,
        };
        if let Ok(line) = serde_json::to_string(&entry) {
            use std::io::Write;
            let mut sink = self.sink.lock().unwrap();
            let _ = writeln!(sink, "{line}");
        }
    }
}

/// Live transport backed by reqwest.
pub struct LiveTransport {
    client: reqwest::blocking::Client,
    bearer: Option<String>,
    recorder: Option<Arc<FixtureRecorder>>,
}

impl LiveTransport {
    pub fn new() -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .user_agent("noteloop/0.1 (research harness)")
            .build()
            .expect("client construction cannot fail with static options");
        Self { client, bearer: None, recorder: None }
    }

    pub fn with_bearer(mut self, token: impl Into<String>) -> Self {
        self.bearer = Some(token.into());
        self
    }

    pub fn with_recorder(mut self, recorder: Arc<FixtureRecorder>) -> Self {
        self.recorder = Some(recorder);
        self
    }
}

impl Default for LiveTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for LiveTransport {
    fn request(
        &self,
        url: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<HttpReply, TransportError> {
        let mut builder = if let Some(body) = params.get(BODY_PARAM) {
            let value: serde_json::Value = serde_json::from_str(body)
                .map_err(|e| TransportError::Http(format!("invalid request body: {e}")))?;
            self.client.post(url).json(&value)
        } else {
            let query: Vec<(&str, &str)> =
                params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            self.client.get(url).query(&query)
        };
        if let Some(token) = &self.bearer {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| TransportError::Http(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| TransportError::Http(e.to_string()))?;
        let reply = HttpReply { status, body };
        if let Some(recorder) = &self.recorder {
            recorder.record(url, params, &reply);
        }
        Ok(reply)
    }
}

/// Replays recorded fixtures; refuses anything it has not seen.
pub struct FixtureTransport {
    entries: Vec<FixtureEntry>,
}

impl FixtureTransport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TransportError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| TransportError::FixtureLoad {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TransportError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(line).map_err(|e| TransportError::FixtureLoad {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }
}

impl HttpTransport for FixtureTransport {
    fn request(
        &self,
        url: &str,
        params: &BTreeMap<String, String>,
    ) -> Result<HttpReply, TransportError> {
        for entry in &self.entries {
            if entry.url == url && &entry.params == params {
                return Ok(HttpReply { status: entry.status, body: entry.response_body.clone() });
            }
        }
        Err(TransportError::NoFixture(format!("{url} with {params:?}")))
    }
}
