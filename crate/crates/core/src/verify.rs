//! Parallel fact-verification track.
//!
//! Draft an answer, split it into atomic facts, and ground each fact against
//! the knowledge graph on its own: link the fact's subject, retrieve the
//! subject's triples, denoise and score them against the fact, then let the
//! LLM judge the fact against the best triples. Contradicted facts are
//! rewritten from the evidence and the corrections are folded into a final
//! answer.

use serde::{Deserialize, Serialize};

use crate::answer::{flags, Answer, Question, QuestionType};
use crate::context::Services;
use crate::denoiser::{DenoiseConfig, Denoiser};
use crate::error::{Error, Result};
use crate::kg::{resolve_relation_labels, EntityRef, KgStore, Triple};
use crate::llm::{parse_yes_no, PromptName};
use crate::scorer::{Candidate, ScoringConfig};
use crate::text::label_similarity;

pub const DEFAULT_VERIFY_TOP_K: usize = 3;
pub const DEFAULT_LINK_FLOOR: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub text: String,
    /// Span of `text` naming the fact's subject; empty when none was given.
    pub subject_surface: String,
    pub origin_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationStatus {
    Verified,
    Revised,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub fact: AtomicFact,
    pub status: VerificationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_entity: Option<EntityRef>,
    pub best_triples: Vec<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl VerificationResult {
    fn unverifiable(fact: &AtomicFact, note: impl Into<String>) -> Self {
        Self {
            fact: fact.clone(),
            status: VerificationStatus::Unverifiable,
            linked_entity: None,
            best_triples: Vec::new(),
            revised_text: None,
            note: Some(note.into()),
        }
    }

    /// The fact as it should appear in the final answer.
    pub fn final_text(&self) -> &str {
        self.revised_text.as_deref().unwrap_or(&self.fact.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Number of best triples shown to the judge.
    pub top_k: usize,
    /// Minimum label similarity for fuzzy entity linking.
    pub link_floor: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_VERIFY_TOP_K,
            link_floor: DEFAULT_LINK_FLOOR,
        }
    }
}

/// Parse `fact | subject` lines. List markers are stripped; a subject that
/// does not occur in its fact is matched case-insensitively or left empty.
pub fn parse_facts(reply: &str) -> Vec<AtomicFact> {
    let mut facts = Vec::new();
    for line in reply.lines() {
        let line = strip_list_marker(line.trim());
        if line.is_empty() {
            continue;
        }
        let (text, subject) = match line.rsplit_once('|') {
            Some((t, s)) => (t.trim(), s.trim()),
            None => (line, ""),
        };
        if text.is_empty() {
            continue;
        }
        facts.push(AtomicFact {
            text: text.to_string(),
            subject_surface: subject_span(text, subject),
            origin_index: facts.len(),
        });
    }
    facts
}

fn strip_list_marker(line: &str) -> &str {
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return rest.trim_start();
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim_start();
        }
    }
    line
}

fn subject_span(text: &str, subject: &str) -> String {
    if subject.is_empty() {
        return String::new();
    }
    if text.contains(subject) {
        return subject.to_string();
    }
    let lower = text.to_lowercase();
    match lower.find(&subject.to_lowercase()) {
        // Only trust the offset when lower-casing kept byte lengths intact.
        Some(start) if lower.len() == text.len() => text[start..start + subject.len()].to_string(),
        _ => String::new(),
    }
}

/// Map a surface form to an entity: exact label lookup first, then the
/// most similar candidate label at or above `floor` (ties to the smaller id).
pub fn link_surface(kg: &dyn KgStore, surface: &str, floor: f64) -> Result<EntityRef> {
    let surface = surface.trim();
    if surface.is_empty() {
        return Err(Error::LinkFailure(String::new()));
    }
    match kg.resolve_entity_id(surface) {
        Ok(e) => return Ok(e),
        Err(Error::NotFound(_)) | Err(Error::InvalidInput(_)) => {}
        Err(e) => return Err(e),
    }
    let mut best: Option<(f64, EntityRef)> = None;
    for cand in kg.entity_candidates(surface)? {
        let sim = label_similarity(surface, &cand.label);
        let better = match &best {
            None => true,
            Some((s, e)) => sim > *s || (sim == *s && cand.id < e.id),
        };
        if better {
            best = Some((sim, cand));
        }
    }
    match best {
        Some((sim, e)) if sim >= floor => Ok(e),
        _ => Err(Error::LinkFailure(surface.to_string())),
    }
}

/// `(subject, relation, object)` lines for prompts.
pub fn evidence_lines(triples: &[Triple]) -> String {
    triples
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct VerifyBranch<'a> {
    services: &'a Services,
    scoring: &'a ScoringConfig,
    denoise: &'a DenoiseConfig,
    cfg: &'a VerifyConfig,
}

impl<'a> VerifyBranch<'a> {
    pub fn new(
        services: &'a Services,
        scoring: &'a ScoringConfig,
        denoise: &'a DenoiseConfig,
        cfg: &'a VerifyConfig,
    ) -> Self {
        Self {
            services,
            scoring,
            denoise,
            cfg,
        }
    }

    pub fn draft_response(&self, q: &Question) -> Result<String> {
        Ok(self
            .services
            .ask(PromptName::Draft, [("question", q.text.as_str())])?
            .trim()
            .to_string())
    }

    pub fn decompose(&self, response: &str) -> Result<Vec<AtomicFact>> {
        if response.trim().is_empty() {
            return Ok(Vec::new());
        }
        let reply = self
            .services
            .ask(PromptName::Decompose, [("response", response)])?;
        Ok(parse_facts(&reply))
    }

    pub fn link_entity(&self, f: &AtomicFact) -> Result<EntityRef> {
        link_surface(self.services.kg.as_ref(), &f.subject_surface, self.cfg.link_floor)
    }

    /// Ground one fact. Link failures and empty evidence yield
    /// `Unverifiable`; KG and provider failures are errors.
    pub fn verify_fact(&self, f: &AtomicFact, q: &Question) -> Result<VerificationResult> {
        let entity = match self.link_entity(f) {
            Ok(e) => e,
            Err(Error::LinkFailure(s)) => {
                return Ok(VerificationResult::unverifiable(
                    f,
                    format!("could not link subject {s:?}"),
                ))
            }
            Err(e) => return Err(e),
        };

        let mut warnings = Vec::new();
        let mut triples: Vec<Triple> = self.services.kg.relations(&entity)?.all().cloned().collect();
        resolve_relation_labels(self.services.kg.as_ref(), &mut triples, &mut warnings)?;
        let denoiser = Denoiser::new(self.services, self.denoise);
        let candidates: Vec<Candidate> = triples.into_iter().map(Candidate::Triple).collect();
        let (candidates, _) = denoiser.rule_layer(candidates, Candidate::relation, &mut warnings);
        let scored = self
            .services
            .scorer
            .score_candidates(&f.text, candidates, self.scoring)?;
        let (scored, _) =
            denoiser.necessity_layer(scored, |c| c.payload.relation(), q, &mut warnings);
        for w in &warnings {
            log::warn!("fact {}: {w}", f.origin_index);
        }

        let best: Vec<Triple> = scored
            .iter()
            .filter_map(|c| c.payload.as_triple().cloned())
            .take(self.cfg.top_k)
            .collect();
        if best.is_empty() {
            let mut r = VerificationResult::unverifiable(f, "no candidate triples after denoising");
            r.linked_entity = Some(entity);
            return Ok(r);
        }

        let evidence = evidence_lines(&best);
        let judgment = self.services.ask(
            PromptName::Judge,
            [("fact", f.text.as_str()), ("evidence", evidence.as_str())],
        )?;
        let mut result = VerificationResult {
            fact: f.clone(),
            status: VerificationStatus::Verified,
            linked_entity: Some(entity),
            best_triples: best,
            revised_text: None,
            note: None,
        };
        match parse_yes_no(&judgment) {
            Ok(true) => {}
            Ok(false) => {
                let rewrite = self.services.ask(
                    PromptName::Rewrite,
                    [("fact", f.text.as_str()), ("evidence", evidence.as_str())],
                )?;
                let rewrite = rewrite.trim();
                if rewrite.is_empty() || rewrite == f.text.trim() {
                    result.status = VerificationStatus::Unverifiable;
                    result.note = Some("contradicted, but the rewrite left the fact unchanged".into());
                } else {
                    result.status = VerificationStatus::Revised;
                    result.revised_text = Some(rewrite.to_string());
                }
            }
            Err(_) => {
                result.status = VerificationStatus::Unverifiable;
                result.note = Some(format!("unparseable judgment {judgment:?}"));
            }
        }
        Ok(result)
    }

    /// Draft, decompose, verify each fact independently, synthesize.
    pub fn run(&self, q: &Question) -> Result<Answer> {
        let mut answer = Answer::new(q.id.clone(), QuestionType::Parallel);
        let draft = self.draft_response(q)?;
        let facts = self.decompose(&draft)?;
        let mut results = facts
            .iter()
            .map(|f| self.verify_fact(f, q))
            .collect::<Result<Vec<_>>>()?;
        results.sort_by_key(|r| r.fact.origin_index);

        answer.draft = Some(draft.clone());
        let grounded = results
            .iter()
            .any(|r| r.status != VerificationStatus::Unverifiable);
        let revised = results
            .iter()
            .any(|r| r.status == VerificationStatus::Revised);
        answer.verification = results;

        if !grounded {
            answer.text = draft;
            answer.flag(flags::UNVERIFIED);
            return Ok(answer);
        }
        if !revised {
            answer.text = draft;
            return Ok(answer);
        }

        let report = synthesis_report(&answer.verification);
        let final_text = self.services.ask(
            PromptName::Synthesize,
            [
                ("question", q.text.as_str()),
                ("draft", draft.as_str()),
                ("report", report.as_str()),
            ],
        )?;
        let final_text = final_text.trim();
        answer.text = if final_text.is_empty() {
            answer
                .warnings
                .push("empty synthesis reply; joined the corrected facts instead".into());
            answer
                .verification
                .iter()
                .map(VerificationResult::final_text)
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            final_text.to_string()
        };
        Ok(answer)
    }
}

fn synthesis_report(results: &[VerificationResult]) -> String {
    results
        .iter()
        .map(|r| match r.status {
            VerificationStatus::Verified => format!("- VERIFIED: {}", r.fact.text),
            VerificationStatus::Revised => format!(
                "- CORRECTED: {} => {}",
                r.fact.text,
                r.revised_text.as_deref().unwrap_or_default()
            ),
            VerificationStatus::Unverifiable => format!("- UNVERIFIABLE: {}", r.fact.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::MemoryStore;
    use crate::llm::{ScriptEntry, StubLlm};
    use crate::scorer::{ConstantReranker, HashEmbedder, HybridScorer};
    use std::sync::Arc;

    const FIXTURE: &str = "\
QF1|Inception|PF1|director|QF2|Christopher Nolan
QF2|Christopher Nolan|PF3|date of birth|1970-07-30|
QF5|Lonely Entity|PF4|wikidata:id|X1|
";

    fn services(llm: Arc<StubLlm>) -> Services {
        Services::new(
            Arc::new(MemoryStore::from_fixture_str(FIXTURE).unwrap()),
            llm,
            HybridScorer::new(Arc::new(HashEmbedder::new(256)), Arc::new(ConstantReranker(0.5))),
        )
    }

    struct Cfgs(ScoringConfig, DenoiseConfig, VerifyConfig);

    fn cfgs() -> Cfgs {
        Cfgs(
            ScoringConfig::default(),
            DenoiseConfig {
                theta_necessity: 0.0,
                ..DenoiseConfig::default()
            },
            VerifyConfig::default(),
        )
    }

    fn fact(text: &str, subject: &str) -> AtomicFact {
        AtomicFact {
            text: text.into(),
            subject_surface: subject.into(),
            origin_index: 0,
        }
    }

    #[test]
    fn parses_fact_lines() {
        let facts = parse_facts(
            "Nolan directed Inception. | Nolan\n\n- Nolan was born in 1970. | nolan\n2. Paris is big\n",
        );
        assert_eq!(facts.len(), 3);
        assert_eq!(facts[0].subject_surface, "Nolan");
        assert_eq!(facts[1].text, "Nolan was born in 1970.");
        assert_eq!(facts[1].subject_surface, "Nolan");
        assert_eq!(facts[1].origin_index, 1);
        assert_eq!(facts[2].text, "Paris is big");
        assert_eq!(facts[2].subject_surface, "");
        for f in &facts {
            assert!(f.text.contains(&f.subject_surface));
        }
        assert!(parse_facts("").is_empty());
    }

    #[test]
    fn decompose_uses_scripted_lines() {
        let llm = Arc::new(StubLlm::new(vec![ScriptEntry::new(
            "Response:\nNolan directed Inception. Nolan was born in 1970.",
            "Nolan directed Inception. | Nolan\nNolan was born in 1970. | Nolan",
        )]));
        let s = services(llm.clone());
        let c = cfgs();
        let b = VerifyBranch::new(&s, &c.0, &c.1, &c.2);
        let facts = b.decompose("Nolan directed Inception. Nolan was born in 1970.").unwrap();
        assert_eq!(facts.len(), 2);
        assert!(b.decompose("").unwrap().is_empty());
        assert_eq!(llm.call_count(), 1);
    }

    #[test]
    fn single_clause_gives_one_fact() {
        let llm = Arc::new(StubLlm::new(vec![ScriptEntry::new(
            "Response:\nInception is a film.",
            "Inception is a film. | Inception",
        )]));
        let s = services(llm);
        let c = cfgs();
        let facts = VerifyBranch::new(&s, &c.0, &c.1, &c.2)
            .decompose("Inception is a film.")
            .unwrap();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].origin_index, 0);
    }

    #[test]
    fn draft_comes_from_provider() {
        let s = services(Arc::new(StubLlm::new(vec![ScriptEntry::new(
            "Question: Who directed Inception?",
            "Christopher Nolan directed Inception.",
        )])));
        let c = cfgs();
        let b = VerifyBranch::new(&s, &c.0, &c.1, &c.2);
        assert_eq!(
            b.draft_response(&Question::new("1", "Who directed Inception?")).unwrap(),
            "Christopher Nolan directed Inception."
        );

        let echo = services(Arc::new(StubLlm::echo()));
        let b = VerifyBranch::new(&echo, &c.0, &c.1, &c.2);
        assert!(b
            .draft_response(&Question::new("1", "Who directed Inception?"))
            .unwrap()
            .contains("Who directed Inception?"));
    }

    #[test]
    fn linking_exact_fuzzy_and_failure() {
        let kg = MemoryStore::from_fixture_str(FIXTURE).unwrap();
        assert_eq!(link_surface(&kg, "Inception", 0.8).unwrap().id, "QF1");
        // One transposition over nine characters: 1 - 2/9 ≈ 0.78.
        assert!(matches!(link_surface(&kg, "inceptoin", 0.8), Err(Error::LinkFailure(_))));
        assert_eq!(link_surface(&kg, "inceptoin", 0.7).unwrap().id, "QF1");
        assert_eq!(link_surface(&kg, "christopher nolan", 0.8).unwrap().id, "QF2");
        assert!(matches!(link_surface(&kg, "", 0.8), Err(Error::LinkFailure(_))));
    }

    #[test]
    fn fuzzy_ties_go_to_smaller_id() {
        let kg = MemoryStore::from_fixture_str(
            "Q20|Alpha|P1|rel|Q30|Alphb\nQ10|Alphc|P1|rel|Q30|Alphb\n",
        )
        .unwrap();
        assert_eq!(link_surface(&kg, "alphz", 0.5).unwrap().id, "Q10");
    }

    #[test]
    fn verified_and_revised() {
        let llm = Arc::new(StubLlm::new(vec![
            ScriptEntry::new("Claim: Christopher Nolan directed Inception.", "yes"),
            ScriptEntry::new("Claim: Christopher Nolan directed Titanic.", "no"),
            ScriptEntry::new(
                "Fact to correct: Christopher Nolan directed Titanic.",
                "Christopher Nolan directed Inception.",
            ),
        ]));
        let s = services(llm);
        let c = cfgs();
        let b = VerifyBranch::new(&s, &c.0, &c.1, &c.2);
        let q = Question::new("1", "x");

        let ok = b
            .verify_fact(&fact("Christopher Nolan directed Inception.", "Christopher Nolan"), &q)
            .unwrap();
        assert_eq!(ok.status, VerificationStatus::Verified);
        assert!(!ok.best_triples.is_empty());

        let bad = b
            .verify_fact(&fact("Christopher Nolan directed Titanic.", "Christopher Nolan"), &q)
            .unwrap();
        assert_eq!(bad.status, VerificationStatus::Revised);
        assert_eq!(bad.revised_text.as_deref(), Some("Christopher Nolan directed Inception."));
    }

    #[test]
    fn identical_rewrite_is_not_a_revision() {
        let llm = Arc::new(StubLlm::new(vec![
            ScriptEntry::new("Claim: ", "no"),
            ScriptEntry::new("Fact to correct: ", "Inception was directed by Nolan."),
        ]));
        let s = services(llm);
        let c = cfgs();
        let r = VerifyBranch::new(&s, &c.0, &c.1, &c.2)
            .verify_fact(&fact("Inception was directed by Nolan.", "Inception"), &Question::new("1", "x"))
            .unwrap();
        assert_eq!(r.status, VerificationStatus::Unverifiable);
        assert!(r.revised_text.is_none());
    }

    #[test]
    fn no_triples_or_no_link_is_unverifiable() {
        let s = services(Arc::new(StubLlm::strict(vec![])));
        let c = cfgs();
        let b = VerifyBranch::new(&s, &c.0, &c.1, &c.2);
        let q = Question::new("1", "x");
        // Its only triple is administrative and gets dropped by the rule layer.
        let r = b.verify_fact(&fact("Lonely Entity exists.", "Lonely Entity"), &q).unwrap();
        assert_eq!(r.status, VerificationStatus::Unverifiable);
        let r = b.verify_fact(&fact("Zorblax exists.", "Zorblax"), &q).unwrap();
        assert_eq!(r.status, VerificationStatus::Unverifiable);
        assert!(r.best_triples.is_empty());
    }

    #[test]
    fn empty_draft_is_flagged() {
        let s = services(Arc::new(StubLlm::new(vec![])));
        let c = cfgs();
        let a = VerifyBranch::new(&s, &c.0, &c.1, &c.2)
            .run(&Question::new("1", "Who?"))
            .unwrap();
        assert!(a.has_flag(flags::UNVERIFIED));
        assert_eq!(a.text, "");
        assert!(a.verification.is_empty());
    }

    #[test]
    fn all_verified_passes_draft_through() {
        let llm = Arc::new(StubLlm::new(vec![
            ScriptEntry::new("Question: Who directed Inception?", "Christopher Nolan directed Inception."),
            ScriptEntry::new(
                "Response:\n",
                "Christopher Nolan directed Inception. | Christopher Nolan",
            ),
            ScriptEntry::new("Claim: ", "yes"),
        ]));
        let s = services(llm.clone());
        let c = cfgs();
        let a = VerifyBranch::new(&s, &c.0, &c.1, &c.2)
            .run(&Question::new("1", "Who directed Inception?"))
            .unwrap();
        assert_eq!(a.text, "Christopher Nolan directed Inception.");
        assert!(a.flags.is_empty());
        assert_eq!(llm.calls_containing("Final answer:"), 0);
    }
}
