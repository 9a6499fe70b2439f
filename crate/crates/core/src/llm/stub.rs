use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, CompletionResponse, LlmProvider};
use crate::error::{Error, Result};

/// One scripted reply: used when `match_substring` occurs in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub match_substring: String,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(match_substring: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            match_substring: match_substring.into(),
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubMode {
    /// Unmatched prompts get the default reply.
    #[default]
    Lenient,
    /// Unmatched prompts fail with [`Error::ScriptMiss`].
    Strict,
    /// Every prompt is returned unchanged.
    Echo,
}

/// Deterministic provider driven by a substring script.
///
/// The entry with the longest matching key wins; equal-length keys resolve to
/// the earliest entry. Prompts are recorded so tests can inspect what each
/// stage sent.
#[derive(Debug, Default)]
pub struct StubLlm {
    entries: Vec<ScriptEntry>,
    default_response: String,
    mode: StubMode,
    log: Mutex<Vec<String>>,
}

impl StubLlm {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            ..Self::default()
        }
    }

    pub fn strict(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            mode: StubMode::Strict,
            ..Self::default()
        }
    }

    pub fn echo() -> Self {
        Self {
            mode: StubMode::Echo,
            ..Self::default()
        }
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default_response = response.into();
        self
    }

    pub fn with_entry(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.entries.push(ScriptEntry::new(key, response));
        self
    }

    /// Load a JSON array of `{match_substring, response}` objects.
    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<ScriptEntry> = serde_json::from_str(text)?;
        Ok(Self::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// Prompts received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    /// Number of recorded prompts containing `needle`.
    pub fn calls_containing(&self, needle: &str) -> usize {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|p| p.contains(needle))
            .count()
    }

    fn lookup(&self, prompt: &str) -> Option<&ScriptEntry> {
        let mut best: Option<&ScriptEntry> = None;
        for e in &self.entries {
            if prompt.contains(&e.match_substring)
                && best.is_none_or(|b| e.match_substring.len() > b.match_substring.len())
            {
                best = Some(e);
            }
        }
        best
    }
}

impl LlmProvider for StubLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        self.log.lock().unwrap().push(request.prompt.clone());
        let text = match (self.mode, self.lookup(&request.prompt)) {
            (StubMode::Echo, _) => request.prompt.clone(),
            (_, Some(entry)) => entry.response.clone(),
            (StubMode::Strict, None) => {
                let head: String = request.prompt.chars().take(80).collect();
                return Err(Error::ScriptMiss(head));
            }
            (StubMode::Lenient, None) => self.default_response.clone(),
        };
        Ok(CompletionResponse {
            text,
            provider: "stub".into(),
        })
    }
}
