//! Few-shot routing between the chained and parallel tracks.
//!
//! The routing rules live only in the classification prompt; a `yes` reply
//! means chained, `no` means parallel.

use serde::Serialize;

use crate::answer::{Question, QuestionType};
use crate::context::Services;
use crate::error::{Error, Result};
use crate::llm::{parse_yes_no, PromptName};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub track: QuestionType,
    /// Raw model reply.
    pub raw: String,
    /// True when the reply held neither `yes` nor `no`.
    pub fallback: bool,
}

pub struct Classifier<'a> {
    services: &'a Services,
    default_track: QuestionType,
}

impl<'a> Classifier<'a> {
    pub fn new(services: &'a Services, default_track: QuestionType) -> Self {
        Self {
            services,
            default_track,
        }
    }

    pub fn classify(&self, q: &Question) -> Result<Classification> {
        if q.text.trim().is_empty() {
            return Err(Error::InvalidInput("empty question".into()));
        }
        let raw = self
            .services
            .ask(PromptName::Classify, [("question", q.text.as_str())])?;
        Ok(match parse_yes_no(&raw) {
            Ok(true) => Classification {
                track: QuestionType::Chained,
                raw,
                fallback: false,
            },
            Ok(false) => Classification {
                track: QuestionType::Parallel,
                raw,
                fallback: false,
            },
            Err(_) => {
                log::warn!(
                    "classifier reply {raw:?} for {:?} is neither yes nor no; using {}",
                    q.id,
                    self.default_track
                );
                Classification {
                    track: self.default_track,
                    raw,
                    fallback: true,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::MemoryStore;
    use crate::llm::{ScriptEntry, StubLlm};
    use crate::scorer::{ConstantReranker, HashEmbedder, HybridScorer};
    use std::sync::Arc;

    fn services(llm: StubLlm) -> Services {
        Services::new(
            Arc::new(MemoryStore::default()),
            Arc::new(llm),
            HybridScorer::new(Arc::new(HashEmbedder::new(8)), Arc::new(ConstantReranker(0.5))),
        )
    }

    #[test]
    fn renders_question_into_prompt() {
        let prompt = crate::llm::PromptLibrary::builtin()
            .get(PromptName::Classify)
            .render([("question", "Q1")])
            .unwrap();
        assert!(prompt.contains("Question: \"Q1\""));
        assert!(prompt.ends_with("Judgment (yes/no): "));
    }

    #[test]
    fn maps_replies_to_tracks() {
        let s = services(StubLlm::new(vec![
            ScriptEntry::new("Question: \"A\"", "yes"),
            ScriptEntry::new("Question: \"B\"", "No."),
            ScriptEntry::new("Question: \"C\"", "it depends"),
        ]));
        let c = Classifier::new(&s, QuestionType::Chained);
        assert_eq!(c.classify(&Question::new("1", "A")).unwrap().track, QuestionType::Chained);
        assert_eq!(c.classify(&Question::new("2", "B")).unwrap().track, QuestionType::Parallel);
        let fb = c.classify(&Question::new("3", "C")).unwrap();
        assert!(fb.fallback);
        assert_eq!(fb.track, QuestionType::Chained);
        let p = Classifier::new(&s, QuestionType::Parallel);
        assert_eq!(p.classify(&Question::new("3", "C")).unwrap().track, QuestionType::Parallel);
    }

    #[test]
    fn repeated_calls_agree() {
        let s = services(StubLlm::new(vec![ScriptEntry::new("Question: \"A\"", "yes")]));
        let c = Classifier::new(&s, QuestionType::Parallel);
        let q = Question::new("1", "A");
        assert_eq!(c.classify(&q).unwrap(), c.classify(&q).unwrap());
    }

    #[test]
    fn provider_errors_propagate() {
        let s = services(StubLlm::strict(vec![]));
        let c = Classifier::new(&s, QuestionType::Chained);
        assert!(matches!(c.classify(&Question::new("1", "A")), Err(Error::ScriptMiss(_))));
    }
}
