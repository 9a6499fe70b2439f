use std::sync::Arc;

use crate::error::Result;
use crate::kg::KgStore;
use crate::llm::{CompletionRequest, LlmProvider, PromptLibrary, PromptName, DEFAULT_MAX_TOKENS};
use crate::scorer::HybridScorer;

/// The providers every stage draws on.
#[derive(Clone)]
pub struct Services {
    pub kg: Arc<dyn KgStore>,
    pub llm: Arc<dyn LlmProvider>,
    pub scorer: HybridScorer,
    pub prompts: PromptLibrary,
    pub max_tokens: u32,
}

impl Services {
    pub fn new(kg: Arc<dyn KgStore>, llm: Arc<dyn LlmProvider>, scorer: HybridScorer) -> Self {
        Self {
            kg,
            llm,
            scorer,
            prompts: PromptLibrary::builtin(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_prompts(mut self, prompts: PromptLibrary) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn render<'a, I>(&self, name: PromptName, bindings: I) -> Result<String>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        self.prompts.get(name).render(bindings)
    }

    /// Render `name` and return the raw completion text.
    pub fn ask<'a, I>(&self, name: PromptName, bindings: I) -> Result<String>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let prompt = self.render(name, bindings)?;
        let reply = self
            .llm
            .complete(&CompletionRequest::new(prompt, self.max_tokens))?;
        Ok(reply.text)
    }
}
