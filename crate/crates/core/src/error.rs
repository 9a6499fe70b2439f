use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),

    /// Endpoint or network failure. `retryable` marks 5xx and timeouts.
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("missing placeholder `{0}`")]
    MissingPlaceholder(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("no scripted response matches prompt: {0}")]
    ScriptMiss(String),

    #[error("unparseable model output: {0:?}")]
    Unparseable(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cosine undefined for a zero vector")]
    ZeroVector,

    #[error("candidate is missing its {0} score")]
    MissingStageScore(&'static str),

    #[error("relation {0} has no resolved label")]
    UnresolvedLabel(String),

    #[error("could not link `{0}` to a knowledge-graph entity")]
    LinkFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn transport(message: impl Into<String>, retryable: bool) -> Self {
        Error::Transport {
            message: message.into(),
            retryable,
        }
    }

    /// True for failures of an external service (KG endpoint, model server),
    /// as opposed to bad user input.
    pub fn is_service_failure(&self) -> bool {
        matches!(
            self,
            Error::Transport { .. }
                | Error::Provider(_)
                | Error::MalformedResponse(_)
                | Error::ScriptMiss(_)
        )
    }
}
