//! Live OpenAI-compatible chat-completions client.

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::llm::{
    cache_key, ChatGateway, Completion, DiskCache, GatewayError, LMRequest, ScriptEntry,
    ScriptMatch,
};
use crate::types::TokenUsage;

/// Retry schedule for transport failures and rate limits.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

/// Appends every live exchange to a playback script, keyed by request hash,
/// so a recorded run replays exactly.
pub struct ScriptRecorder {
    sink: Mutex<std::fs::File>,
}

impl ScriptRecorder {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        if let Some(parent) = path.as_ref().parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { sink: Mutex::new(file) })
    }

    fn record(&self, digest: &str, completion: &Completion) {
        let entry = ScriptEntry {
            match_kind: ScriptMatch::Exact,
            request_digest: Some(digest.to_string()),
            prompt_substring: None,
            response: completion.text.clone(),
            usage: completion.usage,
            probs: completion
                .token_logprobs
                .as_ref()
                .map(|lps| lps.iter().map(|lp| lp.exp()).collect()),
        };
        if let Ok(line) = serde_json::to_string(&entry) {
            use std::io::Write;
            let mut sink = self.sink.lock().unwrap();
            let _ = writeln!(sink, "{line}");
        }
    }
}

/// Counted gate bounding in-flight provider calls.
struct InflightGate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl InflightGate {
    fn new(limit: usize) -> Self {
        Self { slots: Mutex::new(limit.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> InflightSlot<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
        InflightSlot { gate: self }
    }
}

struct InflightSlot<'a> {
    gate: &'a InflightGate,
}

impl Drop for InflightSlot<'_> {
    fn drop(&mut self) {
        *self.gate.slots.lock().unwrap() += 1;
        self.gate.freed.notify_one();
    }
}

/// Live gateway over a `/chat/completions` endpoint.
pub struct HttpGateway {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
    cache: Option<DiskCache>,
    recorder: Option<ScriptRecorder>,
    gate: InflightGate,
    recorded: Mutex<TokenUsage>,
}

impl HttpGateway {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(180))
            .build()
            .expect("client construction cannot fail with static options");
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client,
            retry: RetryPolicy::default(),
            cache: None,
            recorder: None,
            gate: InflightGate::new(8),
            recorded: Mutex::new(TokenUsage::default()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_recorder(mut self, recorder: ScriptRecorder) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn with_inflight_limit(mut self, limit: usize) -> Self {
        self.gate = InflightGate::new(limit);
        self
    }

    fn call_once(&self, req: &LMRequest) -> Result<Completion, CallFailure> {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages.iter().map(|m| json!({
                "role": m.role.as_str(),
                "content": m.content,
            })).collect::<Vec<_>>(),
            "temperature": req.temperature,
        });
        if req.want_logprobs {
            body["logprobs"] = json!(true);
        }
        if let Some(max) = req.max_output_tokens {
            body["max_tokens"] = json!(max);
        }

        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| CallFailure::Retryable(format!("request failed: {e}")))?;

        let status = response.status();
        let text = response
            .text()
            .map_err(|e| CallFailure::Retryable(format!("reading response body: {e}")))?;

        if status.as_u16() == 429 || status.is_server_error() {
            return Err(CallFailure::Retryable(format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err(CallFailure::Refusal(format!("status {status}: {text}")));
        }

        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| CallFailure::Refusal(format!("malformed response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| CallFailure::Refusal("response has no choices".into()))?;
        let token_logprobs = choice
            .logprobs
            .map(|lp| lp.content.into_iter().map(|t| t.logprob).collect::<Vec<f64>>())
            .filter(|v: &Vec<f64>| !v.is_empty());
        Ok(Completion {
            text: choice.message.content,
            usage: TokenUsage {
                input: parsed.usage.prompt_tokens,
                output: parsed.usage.completion_tokens,
            },
            token_logprobs,
        })
    }
}

enum CallFailure {
    Retryable(String),
    Refusal(String),
}

impl ChatGateway for HttpGateway {
    fn complete_chat(&self, req: &LMRequest) -> Result<Completion, GatewayError> {
        if req.messages.is_empty() {
            return Err(GatewayError::Precondition("request has no messages".into()));
        }
        let key = cache_key(req);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key) {
                return Ok(hit);
            }
        }

        let _slot = self.gate.acquire();
        let mut last_error = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.call_once(req) {
                Ok(completion) => {
                    self.recorded.lock().unwrap().add(completion.usage);
                    if let Some(cache) = &self.cache {
                        if let Err(e) = cache.put(&key, &completion) {
                            log::warn!("cache write failed for {key}: {e}");
                        }
                    }
                    if let Some(recorder) = &self.recorder {
                        recorder.record(&key, &completion);
                    }
                    return Ok(completion);
                }
                Err(CallFailure::Refusal(message)) => {
                    return Err(GatewayError::Provider(message));
                }
                Err(CallFailure::Retryable(message)) => {
                    log::warn!("attempt {} failed: {message}", attempt + 1);
                    last_error = message;
                }
            }
        }
        Err(GatewayError::Transport(format!(
            "{} attempts exhausted: {last_error}",
            self.retry.attempts
        )))
    }

    fn recorded_usage(&self) -> TokenUsage {
        *self.recorded.lock().unwrap()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: UsageBody,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: MessageBody,
    #[serde(default)]
    logprobs: Option<LogprobsBody>,
}

#[derive(Deserialize)]
struct MessageBody {
    content: String,
}

#[derive(Deserialize)]
struct LogprobsBody {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}
