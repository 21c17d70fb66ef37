//! Prompt assets for the agent loops. The bundled texts ship inside the
//! binary; any of them can be overridden from a file.

use std::fs;
use std::io;
use std::path::Path;

use crate::notes::{NotesError, NotesPrompt};
use crate::types::Mode;

const REACT_SYSTEM: &str = include_str!("../../assets/react_system.txt");
const FEWSHOT: &str = include_str!("../../assets/ircot_flare_fewshot.txt");
const SYNTHESIS: &str = include_str!("../../assets/synthesis_prompt.txt");

const ACTIONS_NOTES: &str = "Available actions:\n\
- search[entity; question]: search Wikipedia for the entity and gather information relevant to the question. Separate the entity and the question with a semicolon.\n\
- finish[answer]: finish the task and return the answer.";

const ACTIONS_BASELINE: &str = "Available actions:\n\
- search[query]: search Wikipedia and receive the first paragraph of the top pages.\n\
- select[title]: select one page from the latest search results and receive its opening passages.\n\
- lookup[term]: receive the paragraphs of the selected page that contain the term.\n\
- finish[answer]: finish the task and return the answer.";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("reading prompt file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Notes(#[from] NotesError),
}

/// The four prompt texts a run needs.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub react_system: String,
    pub fewshot: String,
    pub synthesis: String,
    pub notes: NotesPrompt,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            react_system: REACT_SYSTEM.to_string(),
            fewshot: FEWSHOT.to_string(),
            synthesis: SYNTHESIS.to_string(),
            notes: NotesPrompt::default(),
        }
    }
}

fn read(path: &Path) -> Result<String, PromptError> {
    fs::read_to_string(path)
        .map_err(|source| PromptError::Io { path: path.display().to_string(), source })
}

impl PromptSet {
    pub fn override_react_system(&mut self, path: &Path) -> Result<(), PromptError> {
        self.react_system = read(path)?;
        Ok(())
    }

    pub fn override_fewshot(&mut self, path: &Path) -> Result<(), PromptError> {
        self.fewshot = read(path)?;
        Ok(())
    }

    pub fn override_synthesis(&mut self, path: &Path) -> Result<(), PromptError> {
        self.synthesis = read(path)?;
        Ok(())
    }

    pub fn override_notes(&mut self, path: &Path) -> Result<(), PromptError> {
        self.notes = NotesPrompt::from_template(read(path)?)?;
        Ok(())
    }

    /// The ReAct system prompt with the mode's action list substituted.
    pub fn react_system_for(&self, mode: Mode) -> String {
        let actions = match mode {
            Mode::Notes => ACTIONS_NOTES,
            Mode::Baseline => ACTIONS_BASELINE,
        };
        if self.react_system.contains("{Actions}") {
            self.react_system.replace("{Actions}", actions)
        } else {
            self.react_system.clone()
        }
    }

    pub fn synthesis_for(&self, question: &str, history: &str) -> String {
        self.synthesis.replace("{Question}", question).replace("{History}", history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_selects_the_action_list() {
        let prompts = PromptSet::default();
        let notes = prompts.react_system_for(Mode::Notes);
        assert!(notes.contains("search[entity; question]"));
        assert!(!notes.contains("select[title]"));
        let baseline = prompts.react_system_for(Mode::Baseline);
        assert!(baseline.contains("select[title]"));
        assert!(baseline.contains("lookup[term]"));
    }

    #[test]
    fn synthesis_slots_fill() {
        let prompts = PromptSet::default();
        let filled = prompts.synthesis_for("Q?", "Thought: t");
        assert!(filled.contains("Question: Q?"));
        assert!(filled.contains("Thought: t"));
    }

    #[test]
    fn fewshot_asset_has_the_tagged_examples() {
        let prompts = PromptSet::default();
        assert!(prompts.fewshot.contains("Enclose each reasoning step within"));
        assert!(prompts.fewshot.contains("<answer>Walls and Bridges</answer>"));
        assert!(prompts.fewshot.contains("<s>Jan de Bont was born on October 22, 1943.</s>"));
    }

    #[test]
    fn file_override_is_honored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sys.txt");
        fs::write(&path, "custom system {Actions}").unwrap();
        let mut prompts = PromptSet::default();
        prompts.override_react_system(&path).unwrap();
        assert!(prompts.react_system_for(Mode::Notes).starts_with("custom system"));
    }
}
