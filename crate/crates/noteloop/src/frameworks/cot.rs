//! Chain-of-thought loops over the shared few-shot prompt.
//!
//! IRCoT retrieves every iteration with the last generated sentence as the
//! query. FLARE first generates the next sentence tentatively with
//! logprobs; retrieval fires only when the minimum token confidence drops
//! below theta, in which case the sentence is regenerated with the fresh
//! observation in context.

use crate::frameworks::parse::{parse_cot_output, ParsedCotOutput};
use crate::frameworks::{
    baseline_chunk_observation, finish_by_synthesis, should_retrieve, FrameworkRunner,
};
use crate::llm::{min_token_confidence, ChatMessage, Completion, GatewayError};
use crate::notes::PrevContextStore;
use crate::types::{
    Mode, Observation, QAItem, ReasoningStep, TerminationReason, TokenUsage, Trace,
};

const CORRECTIVE: &str = "Remember: enclose each reasoning step within <s> </s> tags and give the final answer inside <answer> </answer> tags.";

struct CotState {
    chain: Vec<String>,
    doc_blocks: Vec<String>,
}

impl CotState {
    fn new() -> Self {
        Self { chain: Vec::new(), doc_blocks: Vec::new() }
    }

    fn prompt(&self, runner: &FrameworkRunner, item: &QAItem) -> String {
        let mut prompt = runner.prompts.fewshot.trim_end().to_string();
        prompt.push_str("\n\n\nDOCUMENTS:\n");
        if self.doc_blocks.is_empty() {
            prompt.push_str("(no documents retrieved yet)\n");
        } else {
            prompt.push_str(&self.doc_blocks.join("\n\n"));
            prompt.push('\n');
        }
        prompt.push_str(&format!("\nQuestion: {}\n\nStep-by-step reasoning:\n", item.question));
        for step in &self.chain {
            prompt.push_str(&format!("<s>{step}</s>\n"));
        }
        prompt
    }
}

fn call_main(
    runner: &FrameworkRunner,
    prompt: String,
    want_logprobs: bool,
) -> Result<Completion, GatewayError> {
    let mut request = runner.main_request(vec![ChatMessage::user(prompt)]);
    request.want_logprobs = want_logprobs;
    runner.gateway.complete_chat(&request)
}

/// Generation plus at most one corrective reprompt when the continuation
/// carries neither steps nor an answer.
fn generate_with_retry(
    runner: &FrameworkRunner,
    base_prompt: &str,
    want_logprobs: bool,
) -> Result<(ParsedCotOutput, Completion, String, TokenUsage), GatewayError> {
    let completion = call_main(runner, base_prompt.to_string(), want_logprobs)?;
    let mut usage = completion.usage;
    let mut raw = completion.text.clone();
    let parsed = parse_cot_output(&completion.text);
    if !parsed.steps.is_empty() || parsed.answer.is_some() {
        return Ok((parsed, completion, raw, usage));
    }

    log::warn!("continuation had no tagged steps; reprompting once");
    let reprompt = format!("{base_prompt}\n{CORRECTIVE}\n");
    let second = call_main(runner, reprompt, want_logprobs)?;
    usage.add(second.usage);
    raw.push_str("\n---\n");
    raw.push_str(&second.text);
    let parsed = parse_cot_output(&second.text);
    Ok((parsed, second, raw, usage))
}

fn retrieve_observation(
    runner: &FrameworkRunner,
    prev: &mut PrevContextStore,
    query: &str,
    index: usize,
) -> Result<(Observation, TokenUsage), String> {
    let docs = runner.retriever.retrieve(query).map_err(|e| e.to_string())?;
    match runner.config.mode {
        Mode::Notes => runner
            .notes_writer()
            .write_notes(runner.gateway, query, &docs, prev, index)
            .map_err(|e| e.to_string()),
        Mode::Baseline => Ok((
            baseline_chunk_observation(&docs, runner.config.k, runner.chunk_words, index),
            TokenUsage::default(),
        )),
    }
}

pub(crate) fn run_ircot(runner: &FrameworkRunner, item: &QAItem) -> Trace {
    let config = runner.config;
    let mut trace = Trace::new(&item.id, config.framework, config.mode);
    let mut prev = PrevContextStore::new();
    let mut state = CotState::new();
    let mut query = item.question.clone();

    for _ in 0..config.max_steps {
        let index = trace.steps.len() + 1;
        let (observation, notes_usage) =
            match retrieve_observation(runner, &mut prev, &query, index) {
                Ok(pair) => pair,
                Err(e) => {
                    log::error!("retrieval failed for {}: {e}", item.id);
                    trace.terminated_by = TerminationReason::FatalError;
                    return trace;
                }
            };
        state.doc_blocks.push(observation.rendered.clone());

        let prompt = state.prompt(runner, item);
        let (parsed, _completion, raw, main_usage) =
            match generate_with_retry(runner, &prompt, false) {
                Ok(out) => out,
                Err(e) => {
                    log::error!("main LM call failed for {}: {e}", item.id);
                    trace.terminated_by = TerminationReason::FatalError;
                    return trace;
                }
            };

        state.chain.extend(parsed.steps.iter().cloned());
        let thought =
            if parsed.steps.is_empty() { None } else { Some(parsed.steps.join(" ")) };
        let step = ReasoningStep {
            index,
            thought,
            query: Some(query.clone()),
            action: None,
            observation: Some(observation),
            raw_lm_output: raw,
            main_usage,
            notes_usage,
        };
        trace.append(step).expect("index is computed from the trace");

        if let Some(answer) = parsed.answer {
            trace.final_answer = Some(answer);
            trace.terminated_by = TerminationReason::AnswerTag;
            return trace;
        }
        if let Some(last) = state.chain.last() {
            query = last.clone();
        }
    }

    finish_by_synthesis(runner, item, &mut trace);
    trace
}

pub(crate) fn run_flare(runner: &FrameworkRunner, item: &QAItem) -> Trace {
    let config = runner.config;
    let mut trace = Trace::new(&item.id, config.framework, config.mode);
    let mut prev = PrevContextStore::new();
    let mut state = CotState::new();

    for _ in 0..config.max_steps {
        let index = trace.steps.len() + 1;
        let prompt = state.prompt(runner, item);
        let (parsed, completion, raw, mut main_usage) =
            match generate_with_retry(runner, &prompt, true) {
                Ok(out) => out,
                Err(e) => {
                    log::error!("main LM call failed for {}: {e}", item.id);
                    trace.terminated_by = TerminationReason::FatalError;
                    return trace;
                }
            };

        if parsed.steps.is_empty() {
            let step = ReasoningStep {
                index,
                thought: None,
                query: None,
                action: None,
                observation: None,
                raw_lm_output: raw,
                main_usage,
                notes_usage: TokenUsage::default(),
            };
            trace.append(step).expect("index is computed from the trace");
            if let Some(answer) = parsed.answer {
                trace.final_answer = Some(answer);
                trace.terminated_by = TerminationReason::AnswerTag;
                return trace;
            }
            continue; // two empty continuations burn budget, per the retry rule
        }

        let tentative = parsed.steps[0].clone();
        let confidence = match min_token_confidence(&completion) {
            Ok(c) => c,
            Err(e) => {
                log::error!(
                    "flare needs token logprobs but the endpoint returned none for {}: {e}",
                    item.id
                );
                trace.terminated_by = TerminationReason::FatalError;
                return trace;
            }
        };

        if should_retrieve(confidence, config.theta) {
            let query = tentative.clone();
            let (observation, notes_usage) =
                match retrieve_observation(runner, &mut prev, &query, index) {
                    Ok(pair) => pair,
                    Err(e) => {
                        log::error!("retrieval failed for {}: {e}", item.id);
                        trace.terminated_by = TerminationReason::FatalError;
                        return trace;
                    }
                };
            state.doc_blocks.push(observation.rendered.clone());

            let regen_prompt = state.prompt(runner, item);
            let regen = match call_main(runner, regen_prompt, false) {
                Ok(c) => c,
                Err(e) => {
                    log::error!("regeneration failed for {}: {e}", item.id);
                    trace.terminated_by = TerminationReason::FatalError;
                    return trace;
                }
            };
            main_usage.add(regen.usage);
            let raw = format!("{raw}\n---\n{}", regen.text);
            let reparsed = parse_cot_output(&regen.text);

            if reparsed.steps.is_empty() {
                if let Some(answer) = reparsed.answer {
                    let step = ReasoningStep {
                        index,
                        thought: None,
                        query: Some(query),
                        action: None,
                        observation: Some(observation),
                        raw_lm_output: raw,
                        main_usage,
                        notes_usage,
                    };
                    trace.append(step).expect("index is computed from the trace");
                    trace.final_answer = Some(answer);
                    trace.terminated_by = TerminationReason::AnswerTag;
                    return trace;
                }
                log::warn!("regeneration produced no step; keeping the tentative sentence");
            }
            let kept = reparsed.steps.first().cloned().unwrap_or(tentative);
            state.chain.push(kept.clone());
            let step = ReasoningStep {
                index,
                thought: Some(kept),
                query: Some(query),
                action: None,
                observation: Some(observation),
                raw_lm_output: raw,
                main_usage,
                notes_usage,
            };
            trace.append(step).expect("index is computed from the trace");
        } else {
            // Confident: keep the sentence verbatim, no retrieval this step.
            // Any <answer> emitted alongside steps is ignored; answers are
            // accepted only from step-free continuations.
            state.chain.push(tentative.clone());
            let step = ReasoningStep {
                index,
                thought: Some(tentative),
                query: None,
                action: None,
                observation: None,
                raw_lm_output: raw,
                main_usage,
                notes_usage: TokenUsage::default(),
            };
            trace.append(step).expect("index is computed from the trace");
        }
    }

    finish_by_synthesis(runner, item, &mut trace);
    trace
}
