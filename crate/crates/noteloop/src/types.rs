//! Shared domain types: questions, retrieved documents, notes, reasoning
//! traces, and token accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Observation text injected when no note was accepted for a step.
pub const NO_INFORMATION_SENTINEL: &str =
    "No relevant information, try a different search term.";

/// Benchmark a question was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Fanoutqa,
    Frames,
    Hotpotqa,
    Multihoprag,
}

impl Dataset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dataset::Fanoutqa => "fanoutqa",
            Dataset::Frames => "frames",
            Dataset::Hotpotqa => "hotpotqa",
            Dataset::Multihoprag => "multihoprag",
        }
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fanoutqa" => Ok(Dataset::Fanoutqa),
            "frames" => Ok(Dataset::Frames),
            "hotpotqa" => Ok(Dataset::Hotpotqa),
            "multihoprag" => Ok(Dataset::Multihoprag),
            other => Err(format!("unknown dataset format: {other}")),
        }
    }
}

/// One benchmark question with its gold answer(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub dataset: Dataset,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// Where a retrieved document came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentSource {
    WikipediaApi,
    Bm25Corpus,
    DenseCorpus,
}

/// A ranked retrieval result with a normalized markdown body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDocument {
    pub title: String,
    pub source: DocumentSource,
    pub body_markdown: String,
    pub rank: usize,
    pub fetch_url: Option<String>,
}

/// One accepted per-document extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub page_title: String,
    pub content: String,
    pub step_index: usize,
}

/// The aggregated observation a step feeds back to the main LM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step_index: usize,
    pub notes: Vec<Note>,
    pub rendered: String,
    pub empty: bool,
}

/// Action emitted by a ReAct turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Action {
    Search { entity: String, question: String },
    Finish { answer: String },
    Select { title: String },
    Lookup { term: String },
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Search { entity, question } if entity == question => {
                write!(f, "search[{entity}]")
            }
            Action::Search { entity, question } => write!(f, "search[{entity}; {question}]"),
            Action::Finish { answer } => write!(f, "finish[{answer}]"),
            Action::Select { title } => write!(f, "select[{title}]"),
            Action::Lookup { term } => write!(f, "lookup[{term}]"),
        }
    }
}

/// Input/output token counts for one LM call or an accumulated total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

impl TokenUsage {
    pub fn new(input: u64, output: u64) -> Self {
        Self { input, output }
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.input += other.input;
        self.output += other.output;
    }

    pub fn is_zero(&self) -> bool {
        self.input == 0 && self.output == 0
    }
}

/// Separate accumulators for the main LM and the notes LM.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub main: TokenUsage,
    pub notes: TokenUsage,
}

/// One entry in a reasoning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub thought: Option<String>,
    pub query: Option<String>,
    pub action: Option<Action>,
    pub observation: Option<Observation>,
    pub raw_lm_output: String,
    pub main_usage: TokenUsage,
    pub notes_usage: TokenUsage,
}

/// Agent loop flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    React,
    Ircot,
    Flare,
}

impl Framework {
    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::React => "react",
            Framework::Ircot => "ircot",
            Framework::Flare => "flare",
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "react" => Ok(Framework::React),
            "ircot" => Ok(Framework::Ircot),
            "flare" => Ok(Framework::Flare),
            other => Err(format!("unknown framework: {other}")),
        }
    }
}

/// Whether observations are raw document shavings or extracted notes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Notes,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Notes => "notes",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "notes" => Ok(Mode::Notes),
            other => Err(format!("unknown mode: {other}")),
        }
    }
}

/// How a run over one question ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    FinishAction,
    AnswerTag,
    BudgetExhausted,
    FatalError,
}

/// Full per-question run history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub item_id: String,
    pub framework: Framework,
    pub mode: Mode,
    pub steps: Vec<ReasoningStep>,
    pub final_answer: Option<String>,
    pub terminated_by: TerminationReason,
    pub ledger: TokenLedger,
    pub wall_time_ms: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("step index {got} does not follow trace of length {len} (expected {expected})")]
    StepIndexMismatch { got: usize, len: usize, expected: usize },
}

impl Trace {
    pub fn new(item_id: impl Into<String>, framework: Framework, mode: Mode) -> Self {
        Self {
            item_id: item_id.into(),
            framework,
            mode,
            steps: Vec::new(),
            final_answer: None,
            terminated_by: TerminationReason::FatalError,
            ledger: TokenLedger::default(),
            wall_time_ms: 0,
        }
    }

    /// Appends a step, keeping the ledger in sync. The step index must be
    /// exactly one past the current length.
    pub fn append(&mut self, step: ReasoningStep) -> Result<(), TraceError> {
        let expected = self.steps.len() + 1;
        if step.index != expected {
            return Err(TraceError::StepIndexMismatch {
                got: step.index,
                len: self.steps.len(),
                expected,
            });
        }
        self.ledger.main.add(step.main_usage);
        self.ledger.notes.add(step.notes_usage);
        self.steps.push(step);
        Ok(())
    }

    /// Number of steps that issued a retrieval query.
    pub fn query_step_count(&self) -> usize {
        self.steps.iter().filter(|s| s.query.is_some()).count()
    }
}

/// Knobs shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub theta: f64,
    pub max_steps: usize,
    pub temperature: f64,
    pub main_model: String,
    pub notes_model: String,
    pub judge_model: String,
    pub mode: Mode,
    pub framework: Framework,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k < 1 {
            return Err("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err("theta must lie in [0, 1]".into());
        }
        if self.max_steps < 1 {
            return Err("max_steps must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 5,
            theta: 0.8,
            max_steps: 15,
            temperature: 0.7,
            main_model: "gpt-4o-mini".to_string(),
            notes_model: "gpt-4o-mini".to_string(),
            judge_model: "gpt-4o".to_string(),
            mode: Mode::Notes,
            framework: Framework::React,
            seed: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(index: usize, main: (u64, u64), notes: (u64, u64)) -> ReasoningStep {
        ReasoningStep {
            index,
            thought: None,
            query: None,
            action: None,
            observation: None,
            raw_lm_output: String::new(),
            main_usage: TokenUsage::new(main.0, main.1),
            notes_usage: TokenUsage::new(notes.0, notes.1),
        }
    }

    #[test]
    fn append_updates_ledger() {
        let mut trace = Trace::new("q1", Framework::React, Mode::Notes);
        trace.append(step(1, (100, 10), (0, 0))).unwrap();
        assert_eq!(trace.ledger.main, TokenUsage::new(100, 10));
    }

    #[test]
    fn ledger_is_additive() {
        let mut trace = Trace::new("q1", Framework::React, Mode::Notes);
        trace.append(step(1, (100, 10), (7, 3))).unwrap();
        trace.append(step(2, (200, 20), (5, 1))).unwrap();
        assert_eq!(trace.ledger.main, TokenUsage::new(300, 30));
        assert_eq!(trace.ledger.notes, TokenUsage::new(12, 4));
    }

    #[test]
    fn append_rejects_index_gap() {
        let mut trace = Trace::new("q1", Framework::React, Mode::Notes);
        trace.append(step(1, (1, 1), (0, 0))).unwrap();
        let err = trace.append(step(3, (1, 1), (0, 0))).unwrap_err();
        assert_eq!(err, TraceError::StepIndexMismatch { got: 3, len: 1, expected: 2 });
    }

    #[test]
    fn query_step_count_counts_only_query_steps() {
        let mut trace = Trace::new("q1", Framework::React, Mode::Notes);
        for i in 1..=3 {
            let mut s = step(i, (1, 1), (0, 0));
            s.query = Some(format!("q{i}"));
            trace.append(s).unwrap();
        }
        trace.append(step(4, (1, 1), (0, 0))).unwrap();
        assert_eq!(trace.query_step_count(), 3);

        let empty = Trace::new("q2", Framework::Ircot, Mode::Baseline);
        assert_eq!(empty.query_step_count(), 0);
    }

    #[test]
    fn trace_serializes_with_snake_case_tags() {
        let mut trace = Trace::new("q1", Framework::React, Mode::Notes);
        let mut s = step(1, (1, 2), (3, 4));
        s.action = Some(Action::Search {
            entity: "Diego Costa".into(),
            question: "Which club?".into(),
        });
        trace.append(s).unwrap();
        trace.terminated_by = TerminationReason::FinishAction;
        let json = serde_json::to_string(&trace).unwrap();
        assert!(json.contains("\"framework\":\"react\""));
        assert!(json.contains("\"mode\":\"notes\""));
        assert!(json.contains("\"terminated_by\":\"finish_action\""));
        assert!(json.contains("\"variant\":\"search\""));
        let back: Trace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, trace);
    }
}
