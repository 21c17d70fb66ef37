//! The Thought/Action/Observation loop.
//!
//! Notes mode searches page titles for the action's entity, extracts notes
//! against the action's sub-question, and feeds back the rendered notes.
//! Baseline mode implements the classic search/select/lookup tooling over
//! first paragraphs. A turn that fails to parse costs a budget step and
//! feeds back the no-information sentinel.

use crate::frameworks::parse::parse_react_output;
use crate::frameworks::{
    finish_by_synthesis, observation_from, sentinel_observation, FrameworkRunner,
};
use crate::llm::ChatMessage;
use crate::notes::{NotesWriter, PrevContextStore};
use crate::retrieval::{first_paragraph, lookup, paragraphs};
use crate::types::{
    Action, Mode, Note, Observation, QAItem, ReasoningStep, RetrievedDocument,
    TerminationReason, TokenUsage, Trace, NO_INFORMATION_SENTINEL,
};

pub(crate) fn run_react(runner: &FrameworkRunner, item: &QAItem) -> Trace {
    let config = runner.config;
    let mut trace = Trace::new(&item.id, config.framework, config.mode);
    let mut prev = PrevContextStore::new();
    let writer = runner.notes_writer();
    let mut selected_page: Option<RetrievedDocument> = None;

    let mut messages = vec![
        ChatMessage::system(runner.prompts.react_system_for(config.mode)),
        ChatMessage::user(format!("Question: {}", item.question)),
    ];
    let mut budget_used = 0usize;

    loop {
        if budget_used >= config.max_steps {
            finish_by_synthesis(runner, item, &mut trace);
            return trace;
        }

        let request = runner.main_request(messages.clone());
        let completion = match runner.gateway.complete_chat(&request) {
            Ok(c) => c,
            Err(e) => {
                log::error!("main LM call failed for {}: {e}", item.id);
                trace.terminated_by = TerminationReason::FatalError;
                return trace;
            }
        };
        let index = trace.steps.len() + 1;

        let parsed = match parse_react_output(&completion.text, config.mode) {
            Ok(parsed) => parsed,
            Err(e) => {
                log::warn!("unparsable turn for {} ({e}); injecting corrective observation", item.id);
                budget_used += 1;
                let observation = sentinel_observation(index);
                let step = ReasoningStep {
                    index,
                    thought: None,
                    query: None,
                    action: None,
                    observation: Some(observation),
                    raw_lm_output: completion.text.clone(),
                    main_usage: completion.usage,
                    notes_usage: TokenUsage::default(),
                };
                trace.append(step).expect("index is computed from the trace");
                messages.push(ChatMessage::assistant(completion.text));
                messages.push(ChatMessage::user(format!(
                    "Observation: {NO_INFORMATION_SENTINEL}"
                )));
                continue;
            }
        };

        if let Action::Finish { answer } = &parsed.action {
            let step = ReasoningStep {
                index,
                thought: Some(parsed.thought.clone()),
                query: None,
                action: Some(parsed.action.clone()),
                observation: None,
                raw_lm_output: completion.text,
                main_usage: completion.usage,
                notes_usage: TokenUsage::default(),
            };
            trace.append(step).expect("index is computed from the trace");
            trace.final_answer = Some(answer.clone());
            trace.terminated_by = TerminationReason::FinishAction;
            return trace;
        }

        budget_used += 1;
        let acted = act(runner, &writer, &mut prev, &mut selected_page, &parsed.action, index);
        let (query, observation, notes_usage) = match acted {
            Ok(outcome) => outcome,
            Err(e) => {
                log::error!("action failed for {}: {e}", item.id);
                let step = ReasoningStep {
                    index,
                    thought: Some(parsed.thought),
                    query: None,
                    action: Some(parsed.action),
                    observation: None,
                    raw_lm_output: completion.text,
                    main_usage: completion.usage,
                    notes_usage: TokenUsage::default(),
                };
                trace.append(step).expect("index is computed from the trace");
                trace.terminated_by = TerminationReason::FatalError;
                return trace;
            }
        };

        let rendered = observation.rendered.clone();
        let step = ReasoningStep {
            index,
            thought: Some(parsed.thought),
            query,
            action: Some(parsed.action),
            observation: Some(observation),
            raw_lm_output: completion.text.clone(),
            main_usage: completion.usage,
            notes_usage,
        };
        trace.append(step).expect("index is computed from the trace");
        messages.push(ChatMessage::assistant(completion.text));
        messages.push(ChatMessage::user(format!("Observation: {rendered}")));
    }
}

type ActionOutcome = (Option<String>, Observation, TokenUsage);

fn act(
    runner: &FrameworkRunner,
    writer: &NotesWriter,
    prev: &mut PrevContextStore,
    selected_page: &mut Option<RetrievedDocument>,
    action: &Action,
    index: usize,
) -> Result<ActionOutcome, String> {
    match action {
        Action::Search { entity, question } => match runner.config.mode {
            Mode::Notes => {
                let docs =
                    runner.retriever.retrieve(entity).map_err(|e| e.to_string())?;
                let (observation, notes_usage) = writer
                    .write_notes(runner.gateway, question, &docs, prev, index)
                    .map_err(|e| e.to_string())?;
                let query = format!("{entity}; {question}");
                Ok((Some(query), observation, notes_usage))
            }
            Mode::Baseline => {
                let docs =
                    runner.retriever.retrieve(entity).map_err(|e| e.to_string())?;
                *selected_page = None;
                let notes: Vec<Note> = docs
                    .iter()
                    .map(|doc| Note {
                        page_title: doc.title.clone(),
                        content: first_paragraph(doc),
                        step_index: index,
                    })
                    .collect();
                let rendered = notes
                    .iter()
                    .map(|n| format!("Wikipedia Title: {}\n{}", n.page_title, n.content))
                    .collect::<Vec<_>>()
                    .join("\n");
                Ok((Some(entity.clone()), observation_from(index, notes, rendered), TokenUsage::default()))
            }
        },
        Action::Select { title } => {
            let docs = runner.retriever.retrieve(title).map_err(|e| e.to_string())?;
            let page = docs
                .iter()
                .find(|d| d.title.eq_ignore_ascii_case(title))
                .or_else(|| docs.first())
                .cloned();
            match page {
                Some(page) => {
                    let opening = paragraphs(&page.body_markdown)
                        .into_iter()
                        .take(10)
                        .collect::<Vec<_>>()
                        .join("\n");
                    let note = Note {
                        page_title: page.title.clone(),
                        content: opening.clone(),
                        step_index: index,
                    };
                    *selected_page = Some(page);
                    Ok((None, observation_from(index, vec![note], opening), TokenUsage::default()))
                }
                None => {
                    *selected_page = None;
                    Ok((None, sentinel_observation(index), TokenUsage::default()))
                }
            }
        }
        Action::Lookup { term } => {
            let observation = match selected_page {
                Some(page) => {
                    let matches = lookup(page, term);
                    let notes: Vec<Note> = matches
                        .iter()
                        .map(|paragraph| Note {
                            page_title: page.title.clone(),
                            content: paragraph.clone(),
                            step_index: index,
                        })
                        .collect();
                    let rendered = matches.join("\n");
                    observation_from(index, notes, rendered)
                }
                None => sentinel_observation(index),
            };
            Ok((None, observation, TokenUsage::default()))
        }
        Action::Finish { .. } => unreachable!("finish is handled by the loop"),
    }
}
