//! Scripted gateway for offline runs.
//!
//! A script is a JSONL file of entries answered in file order: each incoming
//! request consumes the first unconsumed entry that matches it. Exact entries
//! match on the request content hash, prefix entries on a prompt substring.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llm::{cache_key, ChatGateway, Completion, GatewayError, LMRequest};
use crate::types::TokenUsage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMatch {
    Exact,
    Prefix,
}

/// One scripted exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub match_kind: ScriptMatch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_substring: Option<String>,
    pub response: String,
    pub usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

impl ScriptEntry {
    /// Entry matched by a substring of the rendered prompt.
    pub fn on_prompt(substring: impl Into<String>, response: impl Into<String>, usage: TokenUsage) -> Self {
        Self {
            match_kind: ScriptMatch::Prefix,
            request_digest: None,
            prompt_substring: Some(substring.into()),
            response: response.into(),
            usage,
            probs: None,
        }
    }

    pub fn with_probs(mut self, probs: Vec<f64>) -> Self {
        self.probs = Some(probs);
        self
    }

    fn matches(&self, req: &LMRequest, prompt: &str) -> bool {
        match self.match_kind {
            ScriptMatch::Exact => self
                .request_digest
                .as_deref()
                .map(|digest| digest == cache_key(req))
                .unwrap_or(false),
            ScriptMatch::Prefix => self
                .prompt_substring
                .as_deref()
                .map(|needle| prompt.contains(needle))
                .unwrap_or(false),
        }
    }
}

/// Answers requests from a fixed script. Never retries, never caches.
pub struct PlaybackGateway {
    entries: Vec<ScriptEntry>,
    state: Mutex<PlaybackState>,
}

#[derive(Default)]
struct PlaybackState {
    consumed: Vec<bool>,
    recorded: TokenUsage,
}

impl PlaybackGateway {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Self {
        let consumed = vec![false; entries.len()];
        Self {
            entries,
            state: Mutex::new(PlaybackState { consumed, recorded: TokenUsage::default() }),
        }
    }

    /// Loads a JSONL script. Blank lines are skipped; anything else that
    /// fails to parse is a load error naming the line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| GatewayError::ScriptLoad {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|e| GatewayError::ScriptLoad {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    /// Number of entries not yet consumed.
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().unwrap();
        state.consumed.iter().filter(|c| !**c).count()
    }

    pub fn fully_consumed(&self) -> bool {
        self.remaining() == 0
    }
}

impl ChatGateway for PlaybackGateway {
    fn complete_chat(&self, req: &LMRequest) -> Result<Completion, GatewayError> {
        if req.messages.is_empty() {
            return Err(GatewayError::Precondition("request has no messages".into()));
        }
        let prompt = req.prompt_text();
        let mut state = self.state.lock().unwrap();
        for (i, entry) in self.entries.iter().enumerate() {
            if state.consumed[i] || !entry.matches(req, &prompt) {
                continue;
            }
            state.consumed[i] = true;
            state.recorded.add(entry.usage);
            let token_logprobs = if req.want_logprobs {
                entry.probs.as_ref().map(|ps| ps.iter().map(|p| p.ln()).collect())
            } else {
                None
            };
            return Ok(Completion {
                text: entry.response.clone(),
                usage: entry.usage,
                token_logprobs,
            });
        }
        let head: String = prompt.chars().take(160).collect();
        Err(GatewayError::PlaybackExhausted(format!(
            "no unconsumed script entry matches request (prompt head: {head:?})"
        )))
    }

    fn recorded_usage(&self) -> TokenUsage {
        self.state.lock().unwrap().recorded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    fn req(content: &str) -> LMRequest {
        LMRequest::new("m", vec![ChatMessage::user(content)], 0.7)
    }

    #[test]
    fn returns_script_entry_verbatim() {
        let gateway = PlaybackGateway::from_entries(vec![ScriptEntry::on_prompt(
            "",
            "Thought: done\nAction: finish[12]",
            TokenUsage::new(10, 5),
        )]);
        let completion = gateway.complete_chat(&req("anything")).unwrap();
        assert_eq!(completion.text, "Thought: done\nAction: finish[12]");
        assert_eq!(completion.usage, TokenUsage::new(10, 5));
    }

    #[test]
    fn substring_entry_matches_only_its_step() {
        let gateway = PlaybackGateway::from_entries(vec![
            ScriptEntry::on_prompt("Vampire Academy", "matched", TokenUsage::new(1, 1)),
            ScriptEntry::on_prompt("", "fallback", TokenUsage::new(1, 1)),
        ]);
        let c = gateway.complete_chat(&req("who is in Spin Out?")).unwrap();
        assert_eq!(c.text, "fallback");
        let c = gateway.complete_chat(&req("cast of Vampire Academy")).unwrap();
        assert_eq!(c.text, "matched");
    }

    #[test]
    fn exhausted_script_errors() {
        let gateway = PlaybackGateway::from_entries(vec![ScriptEntry::on_prompt(
            "",
            "only once",
            TokenUsage::new(1, 1),
        )]);
        gateway.complete_chat(&req("a")).unwrap();
        assert!(matches!(
            gateway.complete_chat(&req("b")),
            Err(GatewayError::PlaybackExhausted(_))
        ));
    }

    #[test]
    fn exact_entry_matches_by_digest() {
        let target = req("the exact one");
        let entry = ScriptEntry {
            match_kind: ScriptMatch::Exact,
            request_digest: Some(cache_key(&target)),
            prompt_substring: None,
            response: "hit".into(),
            usage: TokenUsage::new(2, 2),
            probs: None,
        };
        let gateway = PlaybackGateway::from_entries(vec![entry]);
        assert!(gateway.complete_chat(&req("something else")).is_err());
        assert_eq!(gateway.complete_chat(&target).unwrap().text, "hit");
    }

    #[test]
    fn probs_become_logprobs_on_request() {
        let entry = ScriptEntry::on_prompt("", "x", TokenUsage::new(1, 1))
            .with_probs(vec![0.9, 0.5]);
        let gateway = PlaybackGateway::from_entries(vec![entry]);
        let completion = gateway.complete_chat(&req("q").with_logprobs()).unwrap();
        let lps = completion.token_logprobs.unwrap();
        assert!((lps[0] - 0.9f64.ln()).abs() < 1e-12);
        assert!((lps[1] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logprobs_omitted_unless_requested() {
        let entry = ScriptEntry::on_prompt("", "x", TokenUsage::new(1, 1)).with_probs(vec![0.9]);
        let gateway = PlaybackGateway::from_entries(vec![entry]);
        let completion = gateway.complete_chat(&req("q")).unwrap();
        assert!(completion.token_logprobs.is_none());
    }

    #[test]
    fn malformed_script_line_reports_line_number() {
        let err = PlaybackGateway::parse("{\"match\":\"prefix\"}\nnot json\n").unwrap_err();
        match err {
            GatewayError::ScriptLoad { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn records_usage_per_consumed_entry() {
        let gateway = PlaybackGateway::from_entries(vec![
            ScriptEntry::on_prompt("", "a", TokenUsage::new(10, 1)),
            ScriptEntry::on_prompt("", "b", TokenUsage::new(20, 2)),
        ]);
        gateway.complete_chat(&req("x")).unwrap();
        gateway.complete_chat(&req("y")).unwrap();
        assert_eq!(gateway.recorded_usage(), TokenUsage::new(30, 3));
        assert!(gateway.fully_consumed());
    }
}
