use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::ReasoningPath;
use crate::error::Error;
use crate::verify::VerificationResult;

/// Answer flags.
pub mod flags {
    /// No path was judged sufficient to answer the question.
    pub const INSUFFICIENT: &str = "insufficient";
    /// The central entity could not be linked.
    pub const NO_CENTRAL_ENTITY: &str = "no_central_entity";
    /// No decomposed fact could be grounded; the draft is returned as-is.
    pub const UNVERIFIED: &str = "unverified";
    /// The classifier reply was unusable and the default track was taken.
    pub const CLASSIFIER_FALLBACK: &str = "classifier_fallback";
    /// Search stopped on a path judged sufficient.
    pub const EARLY_STOP: &str = "early_stop";
    /// The per-question expansion budget ran out.
    pub const BUDGET_EXHAUSTED: &str = "budget_exhausted";
    /// A KG endpoint or model provider failed.
    pub const SERVICE_FAILURE: &str = "service_failure";
    /// Any other error aborted the branch.
    pub const ERROR: &str = "error";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(rename = "question")]
    pub text: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold_answers: Vec::new(),
        }
    }

    pub fn with_gold(mut self, gold: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.gold_answers = gold.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Chained,
    Parallel,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Chained => "chained",
            QuestionType::Parallel => "parallel",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chained" => Ok(QuestionType::Chained),
            "parallel" => Ok(QuestionType::Parallel),
            other => Err(Error::InvalidInput(format!("unknown track `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub text: String,
    pub track: QuestionType,
    /// P* for the chained track.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supporting_paths: Vec<ReasoningPath>,
    /// Per-fact outcomes for the parallel track.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verification: Vec<VerificationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<String>,
    pub flags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Answer {
    pub fn new(question_id: impl Into<String>, track: QuestionType) -> Self {
        Self {
            question_id: question_id.into(),
            text: String::new(),
            track,
            supporting_paths: Vec::new(),
            verification: Vec::new(),
            draft: None,
            flags: BTreeSet::new(),
            warnings: Vec::new(),
        }
    }

    pub fn flag(&mut self, flag: &str) {
        self.flags.insert(flag.to_string());
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.contains(flag)
    }

    /// Record a branch failure on the answer instead of aborting.
    pub fn record_error(&mut self, err: &Error) {
        self.flag(if err.is_service_failure() {
            flags::SERVICE_FAILURE
        } else {
            flags::ERROR
        });
        self.warnings.push(err.to_string());
    }
}
