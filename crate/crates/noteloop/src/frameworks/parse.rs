//! Parsers for main-LM turns: the Thought/Action grammar and the
//! `<s>`-tagged chain-of-thought continuations.

use thiserror::Error;

use crate::types::{Action, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReactOutput {
    pub thought: String,
    pub action: Action,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReactParseError {
    #[error("no action line found")]
    NoAction,
    #[error("unknown action verb: {0}")]
    UnknownVerb(String),
    #[error("unbalanced brackets in action")]
    UnbalancedBrackets,
    #[error("search needs `entity; question` here")]
    MissingSemicolon,
    #[error("{0} action is not available here")]
    DisallowedInMode(&'static str),
    #[error("empty {0} in action")]
    EmptyField(&'static str),
}

/// Extracts the last `Thought:` block and the first `Action:` after it.
///
/// Verbs: `search[...]`, `finish[...]`, `select[...]`, `lookup[...]`. In
/// notes mode search requires an `entity; question` pair and select/lookup
/// are rejected; in baseline mode search takes one free-text query.
pub fn parse_react_output(text: &str, mode: Mode) -> Result<ParsedReactOutput, ReactParseError> {
    let thought_start = text.rfind("Thought:");
    let (thought, action_region_start) = match thought_start {
        Some(pos) => {
            let after = &text[pos + "Thought:".len()..];
            let end = after.find("Action:").unwrap_or(after.len());
            (after[..end].trim().to_string(), pos)
        }
        None => (String::new(), 0),
    };

    let region = &text[action_region_start..];
    let action_pos = region.find("Action:").ok_or(ReactParseError::NoAction)?;
    let after_marker = &region[action_pos + "Action:".len()..];

    let verb_start = after_marker
        .find(|c: char| !c.is_whitespace())
        .ok_or(ReactParseError::NoAction)?;
    let verb: String = after_marker[verb_start..]
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    if verb.is_empty() {
        return Err(ReactParseError::NoAction);
    }

    let rest = &after_marker[verb_start + verb.len()..];
    let open = rest.trim_start().starts_with('[');
    if !open {
        return Err(ReactParseError::UnbalancedBrackets);
    }
    let bracket_start = rest.find('[').expect("checked above");
    let content = balanced_bracket_content(&rest[bracket_start..])
        .ok_or(ReactParseError::UnbalancedBrackets)?;

    let action = match verb.to_ascii_lowercase().as_str() {
        "search" => parse_search(content, mode)?,
        "finish" => Action::Finish { answer: content.trim().to_string() },
        "select" => {
            if mode == Mode::Notes {
                return Err(ReactParseError::DisallowedInMode("select"));
            }
            let title = content.trim();
            if title.is_empty() {
                return Err(ReactParseError::EmptyField("title"));
            }
            Action::Select { title: title.to_string() }
        }
        "lookup" => {
            if mode == Mode::Notes {
                return Err(ReactParseError::DisallowedInMode("lookup"));
            }
            let term = content.trim();
            if term.is_empty() {
                return Err(ReactParseError::EmptyField("term"));
            }
            Action::Lookup { term: term.to_string() }
        }
        other => return Err(ReactParseError::UnknownVerb(other.to_string())),
    };

    Ok(ParsedReactOutput { thought, action })
}

fn parse_search(content: &str, mode: Mode) -> Result<Action, ReactParseError> {
    match mode {
        Mode::Notes => {
            let semicolon = content.find(';').ok_or(ReactParseError::MissingSemicolon)?;
            let entity = content[..semicolon].trim();
            let question = content[semicolon + 1..].trim();
            if entity.is_empty() {
                return Err(ReactParseError::EmptyField("entity"));
            }
            if question.is_empty() {
                return Err(ReactParseError::EmptyField("question"));
            }
            Ok(Action::Search { entity: entity.to_string(), question: question.to_string() })
        }
        Mode::Baseline => {
            let query = content.trim();
            if query.is_empty() {
                return Err(ReactParseError::EmptyField("query"));
            }
            // Single free-text query; both halves carry it.
            Ok(Action::Search { entity: query.to_string(), question: query.to_string() })
        }
    }
}

/// Content of the first bracketed group, honoring nested brackets.
/// `text` must start at the opening '['.
fn balanced_bracket_content(text: &str) -> Option<&str> {
    let mut depth = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[1..i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// A parsed chain-of-thought continuation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCotOutput {
    pub steps: Vec<String>,
    pub answer: Option<String>,
}

/// Collects well-formed `<s>...</s>` spans in order plus the first
/// `<answer>...</answer>` span. Unterminated spans are dropped.
pub fn parse_cot_output(text: &str) -> ParsedCotOutput {
    ParsedCotOutput {
        steps: spans(text, "<s>", "</s>"),
        answer: spans(text, "<answer>", "</answer>").into_iter().next(),
    }
}

fn spans(text: &str, open: &str, close: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cursor = 0;
    while let Some(start) = text[cursor..].find(open) {
        let content_start = cursor + start + open.len();
        match text[content_start..].find(close) {
            Some(end) => {
                let content = text[content_start..content_start + end].trim();
                if !content.is_empty() {
                    out.push(content.to_string());
                }
                cursor = content_start + end + close.len();
            }
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_search_with_entity_and_question() {
        let text = "Thought: I need the club.\nAction: search[Diego Costa; Which club did Diego Costa play for in the 2018 FIFA World Cup?]";
        let parsed = parse_react_output(text, Mode::Notes).unwrap();
        assert_eq!(parsed.thought, "I need the club.");
        assert_eq!(
            parsed.action,
            Action::Search {
                entity: "Diego Costa".into(),
                question: "Which club did Diego Costa play for in the 2018 FIFA World Cup?".into(),
            }
        );
    }

    #[test]
    fn parses_finish() {
        let parsed =
            parse_react_output("Thought: done\nAction: finish[Atlético Madrid]", Mode::Notes)
                .unwrap();
        assert_eq!(parsed.action, Action::Finish { answer: "Atlético Madrid".into() });
    }

    #[test]
    fn select_is_mode_dependent() {
        let text = "Thought: pick the film page.\nAction: select[Vampire Academy (film)]";
        let parsed = parse_react_output(text, Mode::Baseline).unwrap();
        assert_eq!(parsed.action, Action::Select { title: "Vampire Academy (film)".into() });
        assert_eq!(
            parse_react_output(text, Mode::Notes).unwrap_err(),
            ReactParseError::DisallowedInMode("select")
        );
    }

    #[test]
    fn notes_search_requires_a_semicolon() {
        let text = "Thought: t\nAction: search[Xavier Samuel filmography]";
        assert_eq!(
            parse_react_output(text, Mode::Notes).unwrap_err(),
            ReactParseError::MissingSemicolon
        );
        let parsed = parse_react_output(text, Mode::Baseline).unwrap();
        assert_eq!(
            parsed.action,
            Action::Search {
                entity: "Xavier Samuel filmography".into(),
                question: "Xavier Samuel filmography".into(),
            }
        );
    }

    #[test]
    fn takes_last_thought_and_first_following_action() {
        let text = "Thought: first idea\nAction: search[A; b?]\nThought: better idea\nAction: finish[done]";
        let parsed = parse_react_output(text, Mode::Notes).unwrap();
        assert_eq!(parsed.thought, "better idea");
        assert_eq!(parsed.action, Action::Finish { answer: "done".into() });
    }

    #[test]
    fn missing_action_is_an_error() {
        assert_eq!(
            parse_react_output("Thought: still thinking", Mode::Notes).unwrap_err(),
            ReactParseError::NoAction
        );
    }

    #[test]
    fn unknown_verb_is_an_error() {
        assert_eq!(
            parse_react_output("Action: teleport[home]", Mode::Notes).unwrap_err(),
            ReactParseError::UnknownVerb("teleport".into())
        );
    }

    #[test]
    fn unbalanced_brackets_are_an_error() {
        assert_eq!(
            parse_react_output("Action: finish[oops", Mode::Notes).unwrap_err(),
            ReactParseError::UnbalancedBrackets
        );
    }

    #[test]
    fn nested_brackets_stay_in_the_answer() {
        let parsed =
            parse_react_output("Action: finish[list [a, b] items]", Mode::Notes).unwrap();
        assert_eq!(parsed.action, Action::Finish { answer: "list [a, b] items".into() });
    }

    #[test]
    fn empty_entity_or_question_is_rejected() {
        assert_eq!(
            parse_react_output("Action: search[; what?]", Mode::Notes).unwrap_err(),
            ReactParseError::EmptyField("entity")
        );
        assert_eq!(
            parse_react_output("Action: search[Thing; ]", Mode::Notes).unwrap_err(),
            ReactParseError::EmptyField("question")
        );
    }

    #[test]
    fn cot_spans_parse_in_order() {
        let text = "<s>Cambodia is officially known as the Kingdom of Cambodia.</s>\
                    <s>National Route 13 stretches towards Cambodia.</s>\
                    <answer>Cambodia</answer>";
        let parsed = parse_cot_output(text);
        assert_eq!(parsed.steps.len(), 2);
        assert_eq!(parsed.steps[0], "Cambodia is officially known as the Kingdom of Cambodia.");
        assert_eq!(parsed.answer.as_deref(), Some("Cambodia"));
    }

    #[test]
    fn cot_without_answer_has_none() {
        let parsed = parse_cot_output("<s>step one</s><s>step two</s>");
        assert_eq!(parsed.steps.len(), 2);
        assert!(parsed.answer.is_none());
    }

    #[test]
    fn unterminated_spans_are_dropped() {
        let parsed = parse_cot_output("<s>good</s><s>dangling");
        assert_eq!(parsed.steps, vec!["good".to_string()]);
        assert_eq!(parse_cot_output("no tags at all"), ParsedCotOutput::default());
    }
}
