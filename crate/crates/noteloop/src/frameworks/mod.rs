//! The three agent loops: ReAct (baseline and notes), IRCoT, and FLARE.
//!
//! Every loop is strictly sequential per question, enforces the step
//! budget, and falls back to a single synthesis call over the full history
//! when the budget runs out. All loops return a [`Trace`]; fatal transport
//! errors terminate the trace instead of panicking.

mod cot;
pub mod parse;
mod prompts;
mod react;

pub use parse::{parse_cot_output, parse_react_output, ParsedCotOutput, ParsedReactOutput};
pub use prompts::{PromptError, PromptSet};

use std::time::Instant;

use crate::llm::{ChatGateway, ChatMessage, GatewayError, LMRequest};
use crate::notes::NotesWriter;
use crate::retrieval::{chunk, Retriever};
use crate::types::{
    Framework, Note, Observation, QAItem, ReasoningStep, RetrievedDocument, RunConfig,
    TokenUsage, Trace, NO_INFORMATION_SENTINEL,
};

/// Default word budget for one baseline observation chunk.
pub const DEFAULT_CHUNK_WORDS: usize = 120;

/// Everything a framework loop needs to run one question.
pub struct FrameworkRunner<'a> {
    pub config: &'a RunConfig,
    pub prompts: &'a PromptSet,
    pub gateway: &'a dyn ChatGateway,
    pub retriever: &'a dyn Retriever,
    pub chunk_words: usize,
    /// Wall-clock timing is skipped under playback so replayed traces are
    /// byte-identical across runs.
    pub record_timing: bool,
}

impl<'a> FrameworkRunner<'a> {
    pub fn new(
        config: &'a RunConfig,
        prompts: &'a PromptSet,
        gateway: &'a dyn ChatGateway,
        retriever: &'a dyn Retriever,
    ) -> Self {
        Self {
            config,
            prompts,
            gateway,
            retriever,
            chunk_words: DEFAULT_CHUNK_WORDS,
            record_timing: false,
        }
    }

    pub fn run(&self, item: &QAItem) -> Trace {
        let started = Instant::now();
        let mut trace = match self.config.framework {
            Framework::React => react::run_react(self, item),
            Framework::Ircot => cot::run_ircot(self, item),
            Framework::Flare => cot::run_flare(self, item),
        };
        if self.record_timing {
            trace.wall_time_ms = started.elapsed().as_millis() as u64;
        }
        trace
    }

    pub(crate) fn notes_writer(&self) -> NotesWriter {
        NotesWriter::new(&self.config.notes_model, self.config.temperature)
            .with_prompt(self.prompts.notes.clone())
    }

    pub(crate) fn main_request(&self, messages: Vec<ChatMessage>) -> LMRequest {
        LMRequest::new(&self.config.main_model, messages, self.config.temperature)
    }
}

/// Retrieval fires only below the threshold; a tie skips retrieval.
pub fn should_retrieve(conf: f64, theta: f64) -> bool {
    conf < theta
}

pub(crate) fn sentinel_observation(step_index: usize) -> Observation {
    Observation {
        step_index,
        notes: Vec::new(),
        rendered: NO_INFORMATION_SENTINEL.to_string(),
        empty: true,
    }
}

pub(crate) fn observation_from(step_index: usize, notes: Vec<Note>, rendered: String) -> Observation {
    if notes.is_empty() {
        sentinel_observation(step_index)
    } else {
        Observation { step_index, notes, rendered, empty: false }
    }
}

/// Baseline observation for the chain-of-thought loops: up to k word-capped
/// chunks drawn from the retrieved documents in rank order.
pub(crate) fn baseline_chunk_observation(
    docs: &[RetrievedDocument],
    k: usize,
    chunk_words: usize,
    step_index: usize,
) -> Observation {
    let mut notes = Vec::new();
    'outer: for doc in docs {
        for piece in chunk(doc, chunk_words) {
            notes.push(Note { page_title: doc.title.clone(), content: piece, step_index });
            if notes.len() == k {
                break 'outer;
            }
        }
    }
    let rendered = notes
        .iter()
        .map(|n| format!("{} - {}", n.page_title, n.content))
        .collect::<Vec<_>>()
        .join("\n\n");
    observation_from(step_index, notes, rendered)
}

/// Text form of the run history fed to the synthesis prompt. Contains every
/// thought, action, query, and rendered observation in order.
pub fn render_history(steps: &[ReasoningStep]) -> String {
    let mut blocks = Vec::new();
    for step in steps {
        let mut lines = Vec::new();
        if let Some(thought) = &step.thought {
            lines.push(format!("Thought: {thought}"));
        }
        if let Some(action) = &step.action {
            lines.push(format!("Action: {action}"));
        } else if let Some(query) = &step.query {
            lines.push(format!("Query: {query}"));
        }
        if let Some(observation) = &step.observation {
            lines.push(format!("Observation: {}", observation.rendered));
        }
        if lines.is_empty() && !step.raw_lm_output.is_empty() {
            lines.push(step.raw_lm_output.clone());
        }
        if !lines.is_empty() {
            blocks.push(lines.join("\n"));
        }
    }
    blocks.join("\n\n")
}

/// One LM call over the full history when the budget is exhausted.
pub fn synthesize_final_answer(
    runner: &FrameworkRunner,
    item: &QAItem,
    steps: &[ReasoningStep],
) -> Result<(String, TokenUsage), GatewayError> {
    let prompt = runner.prompts.synthesis_for(&item.question, &render_history(steps));
    let request = runner.main_request(vec![ChatMessage::user(prompt)]);
    let completion = runner.gateway.complete_chat(&request)?;
    if completion.text.trim().is_empty() {
        log::warn!("synthesis for {} returned an empty answer", item.id);
    }
    Ok((completion.text, completion.usage))
}

/// Appends the synthesis step and closes the trace as budget-exhausted.
pub(crate) fn finish_by_synthesis(runner: &FrameworkRunner, item: &QAItem, trace: &mut Trace) {
    match synthesize_final_answer(runner, item, &trace.steps) {
        Ok((answer, usage)) => {
            let step = ReasoningStep {
                index: trace.steps.len() + 1,
                thought: None,
                query: None,
                action: None,
                observation: None,
                raw_lm_output: answer.clone(),
                main_usage: usage,
                notes_usage: TokenUsage::default(),
            };
            trace.append(step).expect("index is computed from the trace");
            trace.final_answer = Some(answer);
            trace.terminated_by = crate::types::TerminationReason::BudgetExhausted;
        }
        Err(e) => {
            log::error!("synthesis failed for {}: {e}", item.id);
            trace.terminated_by = crate::types::TerminationReason::FatalError;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_fires_strictly_below_theta() {
        assert!(should_retrieve(0.79, 0.8));
        assert!(!should_retrieve(0.81, 0.8));
        assert!(!should_retrieve(0.8, 0.8), "tie skips retrieval");
    }

    #[test]
    fn history_contains_every_observation() {
        let steps = vec![
            ReasoningStep {
                index: 1,
                thought: Some("look it up".into()),
                query: Some("Diego Costa; club?".into()),
                action: Some(crate::types::Action::Search {
                    entity: "Diego Costa".into(),
                    question: "club?".into(),
                }),
                observation: Some(observation_from(
                    1,
                    vec![Note { page_title: "Diego Costa".into(), content: "Atlético".into(), step_index: 1 }],
                    "(Result 1) Diego Costa - Atlético".into(),
                )),
                raw_lm_output: "...".into(),
                main_usage: TokenUsage::default(),
                notes_usage: TokenUsage::default(),
            },
        ];
        let history = render_history(&steps);
        assert!(history.contains("Thought: look it up"));
        assert!(history.contains("Action: search[Diego Costa; club?]"));
        assert!(history.contains("Observation: (Result 1) Diego Costa - Atlético"));
    }

    #[test]
    fn baseline_chunks_cap_at_k() {
        let doc = |title: &str, body: &str| RetrievedDocument {
            title: title.into(),
            source: crate::types::DocumentSource::WikipediaApi,
            body_markdown: body.into(),
            rank: 1,
            fetch_url: None,
        };
        let docs = vec![doc("A", "one two.\n\nthree four."), doc("B", "five six.")];
        let obs = baseline_chunk_observation(&docs, 2, 2, 1);
        assert_eq!(obs.notes.len(), 2);
        assert_eq!(obs.notes[0].page_title, "A");
        assert!(!obs.empty);
        let empty = baseline_chunk_observation(&[], 2, 2, 1);
        assert!(empty.empty);
        assert_eq!(empty.rendered, NO_INFORMATION_SENTINEL);
    }
}
