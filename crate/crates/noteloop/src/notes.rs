//! Query-focused note extraction.
//!
//! Each retrieved page goes through the notes LM once per step with the
//! current query and the content already extracted from that page. A
//! `YES#...` reply becomes a note; anything else is a rejection. Accepted
//! notes are assembled in source rank order into the step observation.

use std::collections::BTreeMap;

use crate::llm::{ChatGateway, ChatMessage, GatewayError, LMRequest};
use crate::types::{Note, Observation, RetrievedDocument, TokenUsage, NO_INFORMATION_SENTINEL};

const DEFAULT_TEMPLATE: &str = include_str!("../assets/notes_prompt.txt");
const SLOTS: [&str; 3] = ["{Context}", "{PrevContext}", "{Query}"];

/// Default cap on the words of page body fed to the notes LM.
pub const DEFAULT_TRUNCATE_WORDS: usize = 24_000;

#[derive(Debug, thiserror::Error)]
pub enum NotesError {
    #[error("notes prompt template must contain {0} exactly once")]
    BadTemplate(&'static str),
}

/// The extraction prompt with its three fill slots.
#[derive(Debug, Clone)]
pub struct NotesPrompt {
    template: String,
}

impl NotesPrompt {
    pub fn from_template(template: impl Into<String>) -> Result<Self, NotesError> {
        let template = template.into();
        for slot in SLOTS {
            if template.matches(slot).count() != 1 {
                return Err(NotesError::BadTemplate(match slot {
                    "{Context}" => "{Context}",
                    "{PrevContext}" => "{PrevContext}",
                    _ => "{Query}",
                }));
            }
        }
        Ok(Self { template })
    }

    pub fn fill(&self, context: &str, prev_context: &str, query: &str) -> String {
        self.template
            .replace("{Context}", context)
            .replace("{PrevContext}", prev_context)
            .replace("{Query}", query)
    }
}

impl Default for NotesPrompt {
    fn default() -> Self {
        Self::from_template(DEFAULT_TEMPLATE).expect("bundled template has all slots")
    }
}

/// Per-question memory of what has already been extracted from each page.
/// Cleared between questions by constructing a fresh store.
#[derive(Debug, Default, Clone)]
pub struct PrevContextStore {
    by_title: BTreeMap<String, Vec<String>>,
}

impl PrevContextStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulated note texts for a page, newline-joined for the prompt.
    pub fn context_for(&self, page_title: &str) -> String {
        self.by_title
            .get(page_title)
            .map(|notes| notes.join("\n"))
            .unwrap_or_default()
    }

    pub fn record(&mut self, page_title: &str, content: &str) {
        self.by_title
            .entry(page_title.to_string())
            .or_default()
            .push(content.to_string());
    }

    pub fn contains(&self, page_title: &str, content: &str) -> bool {
        self.by_title
            .get(page_title)
            .map(|notes| notes.iter().any(|n| n == content))
            .unwrap_or(false)
    }
}

enum Verdict {
    Accepted(String),
    Rejected,
    Malformed,
}

fn parse_response(response: &str) -> Verdict {
    let trimmed = response.trim();
    let starts_with = |marker: &str| {
        trimmed
            .get(..marker.len())
            .map(|head| head.eq_ignore_ascii_case(marker))
            .unwrap_or(false)
    };
    if starts_with("yes#") {
        let content = trimmed["yes#".len()..].trim();
        if content.is_empty() {
            return Verdict::Malformed;
        }
        return Verdict::Accepted(content.to_string());
    }
    if starts_with("no#") {
        return Verdict::Rejected;
    }
    Verdict::Malformed
}

/// Cuts a body to its first `max_words` words, preserving layout.
fn truncate_words(body: &str, max_words: usize) -> &str {
    let mut count = 0;
    let mut in_word = false;
    for (offset, c) in body.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            count += 1;
            if count > max_words {
                return &body[..offset];
            }
        }
    }
    body
}

/// Drives the notes LM for one run.
pub struct NotesWriter {
    pub prompt: NotesPrompt,
    pub model: String,
    pub temperature: f64,
    pub truncate_words: usize,
}

impl NotesWriter {
    pub fn new(model: impl Into<String>, temperature: f64) -> Self {
        Self {
            prompt: NotesPrompt::default(),
            model: model.into(),
            temperature,
            truncate_words: DEFAULT_TRUNCATE_WORDS,
        }
    }

    pub fn with_prompt(mut self, prompt: NotesPrompt) -> Self {
        self.prompt = prompt;
        self
    }

    /// One extraction call. Returns the note (if accepted) and the usage
    /// charged to the notes ledger for this call.
    pub fn extract_note(
        &self,
        gateway: &dyn ChatGateway,
        query: &str,
        doc: &RetrievedDocument,
        prev: &mut PrevContextStore,
        step_index: usize,
    ) -> Result<(Option<Note>, TokenUsage), GatewayError> {
        if query.trim().is_empty() {
            return Err(GatewayError::Precondition("extraction query is empty".into()));
        }
        let body = truncate_words(&doc.body_markdown, self.truncate_words);
        if body.len() < doc.body_markdown.len() {
            log::warn!(
                "truncated {} from {} to {} words for note extraction",
                doc.title,
                doc.body_markdown.split_whitespace().count(),
                self.truncate_words
            );
        }
        let filled = self.prompt.fill(body, &prev.context_for(&doc.title), query);
        let request = LMRequest::new(&self.model, vec![ChatMessage::user(filled)], self.temperature);
        let completion = gateway.complete_chat(&request)?;
        let note = match parse_response(&completion.text) {
            Verdict::Accepted(content) => {
                prev.record(&doc.title, &content);
                Some(Note { page_title: doc.title.clone(), content, step_index })
            }
            Verdict::Rejected => None,
            Verdict::Malformed => {
                log::warn!(
                    "notes response for {} has no usable marker, rejecting: {:?}",
                    doc.title,
                    completion.text.chars().take(80).collect::<String>()
                );
                None
            }
        };
        Ok((note, completion.usage))
    }

    /// Extracts from every document and assembles the step observation.
    /// Documents are visited in rank order so assembly is deterministic.
    pub fn write_notes(
        &self,
        gateway: &dyn ChatGateway,
        query: &str,
        docs: &[RetrievedDocument],
        prev: &mut PrevContextStore,
        step_index: usize,
    ) -> Result<(Observation, TokenUsage), GatewayError> {
        let mut ordered: Vec<&RetrievedDocument> = docs.iter().collect();
        ordered.sort_by_key(|d| d.rank);

        let mut notes = Vec::new();
        let mut usage = TokenUsage::default();
        for doc in ordered {
            if doc.body_markdown.trim().is_empty() {
                continue;
            }
            let (note, call_usage) = self.extract_note(gateway, query, doc, prev, step_index)?;
            usage.add(call_usage);
            if let Some(note) = note {
                notes.push(note);
            }
        }
        let rendered = render_notes(&notes);
        let empty = notes.is_empty();
        Ok((Observation { step_index, notes, rendered, empty }, usage))
    }
}

fn render_notes(notes: &[Note]) -> String {
    if notes.is_empty() {
        return NO_INFORMATION_SENTINEL.to_string();
    }
    notes
        .iter()
        .enumerate()
        .map(|(i, note)| {
            let single_line = note.content.split_whitespace().collect::<Vec<_>>().join(" ");
            format!("(Result {}) {} - {}", i + 1, note.page_title, single_line)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Deterministic rendering of an observation; rendering twice is stable.
pub fn render_observation(observation: &Observation) -> String {
    render_notes(&observation.notes)
}
