//! Text-completion providers, prompt templates and reply parsing.

mod prompts;
mod stub;
mod template;

use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::transport::HttpTransport;

pub use prompts::{PromptLibrary, PromptName};
pub use stub::{ScriptEntry, StubLlm, StubMode};
pub use template::PromptTemplate;

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    temperature: f32,
}

impl CompletionRequest {
    /// Every pipeline call decodes greedily.
    pub fn new(prompt: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            temperature: 0.0,
        }
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub provider: String,
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

impl<T: LlmProvider + ?Sized> LlmProvider for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

/// Posts `{prompt, temperature, max_tokens}` and reads `{text}`.
pub struct HttpLlm {
    url: String,
    transport: Arc<dyn HttpTransport>,
}

impl HttpLlm {
    pub fn new(url: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            url: url.into(),
            transport,
        }
    }
}

impl LlmProvider for HttpLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let body = json!({
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let reply = self.transport.post_json(&self.url, &body).map_err(|e| match e {
            Error::Transport { message, .. } => Error::Provider(message),
            other => other,
        })?;
        let text = reply
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| Error::MalformedResponse("completion reply without `text`".into()))?;
        Ok(CompletionResponse {
            text: text.to_string(),
            provider: "http".into(),
        })
    }
}

/// Case-insensitive scan for the first standalone `yes` or `no`.
pub fn parse_yes_no(text: &str) -> Result<bool> {
    text.split(|c: char| !c.is_alphanumeric())
        .find_map(|tok| {
            if tok.eq_ignore_ascii_case("yes") {
                Some(true)
            } else if tok.eq_ignore_ascii_case("no") {
                Some(false)
            } else {
                None
            }
        })
        .ok_or_else(|| Error::Unparseable(text.to_string()))
}

/// First decimal number in `text`, clamped to `[0, 1]`.
pub fn parse_unit_score(text: &str) -> Result<f64> {
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let re = NUMBER.get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)").unwrap());
    let m = re
        .find(text)
        .ok_or_else(|| Error::Unparseable(text.to_string()))?;
    let v: f64 = m
        .as_str()
        .parse()
        .map_err(|_| Error::Unparseable(text.to_string()))?;
    Ok(v.clamp(0.0, 1.0))
}
