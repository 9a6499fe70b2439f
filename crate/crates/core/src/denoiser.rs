//! Two-layer relation denoising.
//!
//! The rule layer drops administrative relations whose label contains a
//! keyword from `k_invalid`; it never calls a model. The necessity layer asks
//! the LLM how necessary a relation is for the question and drops those
//! scoring below `theta_necessity`. Both layers keep an item whenever they
//! cannot decide (missing label, unparseable score, provider failure).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::answer::Question;
use crate::context::Services;
use crate::error::{Error, Result};
use crate::kg::RelationRef;
use crate::llm::{parse_unit_score, PromptName};
use crate::scorer::Candidate;

pub const DEFAULT_THETA_NECESSITY: f64 = 0.5;

pub fn default_k_invalid() -> BTreeSet<String> {
    ["id", "source", "version", "metadata"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub k_invalid: BTreeSet<String>,
    pub theta_necessity: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            k_invalid: default_k_invalid(),
            theta_necessity: DEFAULT_THETA_NECESSITY,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_invalid.iter().any(|k| k.is_empty()) {
            return Err(Error::InvalidConfig("empty keyword in k_invalid".into()));
        }
        if !(0.0..=1.0).contains(&self.theta_necessity) {
            return Err(Error::InvalidConfig(format!(
                "theta_necessity {} outside [0, 1]",
                self.theta_necessity
            )));
        }
        Ok(())
    }

    /// Lower-case every keyword.
    pub fn normalized(mut self) -> Self {
        self.k_invalid = self.k_invalid.iter().map(|k| k.to_lowercase()).collect();
        self
    }
}

/// True when the relation label contains any keyword, ignoring case.
pub fn rule_filter(r: &RelationRef, cfg: &DenoiseConfig) -> Result<bool> {
    if r.label.is_empty() {
        return Err(Error::UnresolvedLabel(r.id.clone()));
    }
    let label = r.label.to_lowercase();
    Ok(cfg
        .k_invalid
        .iter()
        .any(|k| label.contains(&k.to_lowercase())))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseOutcome {
    pub kept: Vec<Candidate>,
    pub dropped_by_rule: Vec<Candidate>,
    pub dropped_by_necessity: Vec<Candidate>,
    pub warnings: Vec<String>,
}

pub struct Denoiser<'a> {
    services: &'a Services,
    cfg: &'a DenoiseConfig,
}

impl<'a> Denoiser<'a> {
    pub fn new(services: &'a Services, cfg: &'a DenoiseConfig) -> Self {
        Self { services, cfg }
    }

    /// LLM necessity of `r` for `q`, in `[0, 1]`. An unparseable reply
    /// yields 1.0 and a warning.
    pub fn necessity_score(
        &self,
        r: &RelationRef,
        q: &Question,
        warnings: &mut Vec<String>,
    ) -> Result<f64> {
        let reply = self.services.ask(
            PromptName::Necessity,
            [("relation", r.name()), ("question", q.text.as_str())],
        )?;
        match parse_unit_score(&reply) {
            Ok(s) => Ok(s),
            Err(_) => {
                warnings.push(format!(
                    "unparseable necessity score {reply:?} for relation {}; kept",
                    r.name()
                ));
                Ok(1.0)
            }
        }
    }

    /// Split items by the keyword rule. Items without a label are kept.
    pub fn rule_layer<T>(
        &self,
        items: Vec<T>,
        relation_of: impl Fn(&T) -> &RelationRef,
        warnings: &mut Vec<String>,
    ) -> (Vec<T>, Vec<T>) {
        let mut kept = Vec::with_capacity(items.len());
        let mut dropped = Vec::new();
        for item in items {
            match rule_filter(relation_of(&item), self.cfg) {
                Ok(true) => dropped.push(item),
                Ok(false) => kept.push(item),
                Err(e) => {
                    warnings.push(format!("{e}; kept"));
                    kept.push(item);
                }
            }
        }
        (kept, dropped)
    }

    /// Split items by necessity score, one LLM call per distinct relation.
    ///
    /// A threshold of 0 cannot drop anything, so no calls are made.
    pub fn necessity_layer<T>(
        &self,
        items: Vec<T>,
        relation_of: impl Fn(&T) -> &RelationRef,
        q: &Question,
        warnings: &mut Vec<String>,
    ) -> (Vec<T>, Vec<T>) {
        if self.cfg.theta_necessity <= 0.0 {
            return (items, Vec::new());
        }
        let mut scores: HashMap<String, f64> = HashMap::new();
        let mut kept = Vec::with_capacity(items.len());
        let mut dropped = Vec::new();
        for item in items {
            let r = relation_of(&item);
            let key = format!("{}\u{1f}{}", r.id, r.label);
            let score = match scores.get(&key) {
                Some(&s) => s,
                None => {
                    let s = match self.necessity_score(r, q, warnings) {
                        Ok(s) => s,
                        Err(e) => {
                            warnings.push(format!("necessity scoring failed for {}: {e}; kept", r.name()));
                            1.0
                        }
                    };
                    scores.insert(key, s);
                    s
                }
            };
            if score < self.cfg.theta_necessity {
                dropped.push(item);
            } else {
                kept.push(item);
            }
        }
        (kept, dropped)
    }

    /// Rule layer, then necessity layer. Survivors keep their input order.
    pub fn denoise(&self, candidates: Vec<Candidate>, q: &Question) -> DenoiseOutcome {
        let mut warnings = Vec::new();
        let (after_rule, dropped_by_rule) =
            self.rule_layer(candidates, Candidate::relation, &mut warnings);
        let (kept, dropped_by_necessity) =
            self.necessity_layer(after_rule, Candidate::relation, q, &mut warnings);
        DenoiseOutcome {
            kept,
            dropped_by_rule,
            dropped_by_necessity,
            warnings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityRef, MemoryStore, Term, Triple};
    use crate::llm::{ScriptEntry, StubLlm};
    use crate::scorer::{ConstantReranker, HashEmbedder, HybridScorer};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn services(llm: Arc<StubLlm>) -> Services {
        Services::new(
            Arc::new(MemoryStore::default()),
            llm,
            HybridScorer::new(Arc::new(HashEmbedder::new(8)), Arc::new(ConstantReranker(0.5))),
        )
    }

    fn rel(label: &str) -> RelationRef {
        RelationRef::new(format!("P{}", label.len()), label)
    }

    fn triple(rel_id: &str, label: &str, obj: &str) -> Candidate {
        Candidate::Triple(Triple::new(
            EntityRef::new("Q25188", "Inception").unwrap(),
            RelationRef::new(rel_id, label),
            Term::literal(obj),
        ))
    }

    #[test]
    fn keyword_rule() {
        let cfg = DenoiseConfig::default();
        assert!(rule_filter(&rel("wikidata:id"), &cfg).unwrap());
        assert!(rule_filter(&rel("data source"), &cfg).unwrap());
        assert!(rule_filter(&rel("Software Version"), &cfg).unwrap());
        assert!(!rule_filter(&rel("spouse"), &cfg).unwrap());
        assert!(matches!(
            rule_filter(&RelationRef::new("P1", ""), &cfg),
            Err(Error::UnresolvedLabel(_))
        ));
    }

    #[test]
    fn administrative_triple_is_dropped_without_llm() {
        let llm = Arc::new(StubLlm::strict(vec![]));
        let s = services(llm.clone());
        let cfg = DenoiseConfig::default();
        let out = Denoiser::new(&s, &cfg).denoise(
            vec![triple("PX", "wikidata:id", "Q1375011")],
            &Question::new("q", "Who directed Inception?"),
        );
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped_by_rule.len(), 1);
        assert_eq!(llm.call_count(), 0);
    }

    #[test]
    fn empty_input() {
        let llm = Arc::new(StubLlm::strict(vec![]));
        let s = services(llm.clone());
        let cfg = DenoiseConfig::default();
        let out = Denoiser::new(&s, &cfg).denoise(vec![], &Question::new("q", "x"));
        assert_eq!(out, DenoiseOutcome::default());
    }

    #[test]
    fn necessity_threshold() {
        let llm = Arc::new(StubLlm::new(vec![
            ScriptEntry::new("Relation: director\n", "0.9"),
            ScriptEntry::new("Relation: height\n", "0.1"),
        ]));
        let s = services(llm.clone());
        let cfg = DenoiseConfig::default();
        let d = Denoiser::new(&s, &cfg);
        let q = Question::new("q", "When was the director of Inception born?");
        let mut w = Vec::new();
        assert_eq!(d.necessity_score(&rel("director"), &q, &mut w).unwrap(), 0.9);
        assert_eq!(d.necessity_score(&rel("height"), &q, &mut w).unwrap(), 0.1);
        assert!(w.is_empty());

        let out = d.denoise(
            vec![triple("P2", "height", "1.81"), triple("P1", "director", "Nolan")],
            &q,
        );
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].relation().label, "director");
        assert_eq!(out.dropped_by_necessity.len(), 1);
    }

    #[test]
    fn unparseable_score_keeps_item() {
        let llm = Arc::new(StubLlm::new(vec![]).with_default("not sure"));
        let s = services(llm);
        let cfg = DenoiseConfig::default();
        let d = Denoiser::new(&s, &cfg);
        let mut w = Vec::new();
        let q = Question::new("q", "x");
        assert_eq!(d.necessity_score(&rel("height"), &q, &mut w).unwrap(), 1.0);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn provider_failure_keeps_items() {
        let llm = Arc::new(StubLlm::strict(vec![]));
        let s = services(llm);
        let cfg = DenoiseConfig::default();
        let out = Denoiser::new(&s, &cfg).denoise(
            vec![triple("P1", "director", "Nolan"), triple("P1", "director", "Thomas")],
            &Question::new("q", "x"),
        );
        assert_eq!(out.kept.len(), 2);
        // One failed call per distinct relation.
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn zero_threshold_skips_llm() {
        let llm = Arc::new(StubLlm::strict(vec![]));
        let s = services(llm.clone());
        let cfg = DenoiseConfig {
            theta_necessity: 0.0,
            ..DenoiseConfig::default()
        };
        let out = Denoiser::new(&s, &cfg).denoise(
            vec![triple("P1", "director", "Nolan"), triple("P9", "wikidata:id", "Q1")],
            &Question::new("q", "x"),
        );
        assert_eq!(out.kept.len(), 1);
        assert_eq!(llm.call_count(), 0);
    }

    #[test]
    fn one_call_per_distinct_relation() {
        let llm = Arc::new(StubLlm::new(vec![]).with_default("0.8"));
        let s = services(llm.clone());
        let cfg = DenoiseConfig::default();
        let items: Vec<_> = (0..5).map(|i| triple("P1", "cast member", &format!("a{i}"))).collect();
        let out = Denoiser::new(&s, &cfg).denoise(items, &Question::new("q", "x"));
        assert_eq!(out.kept.len(), 5);
        assert_eq!(llm.call_count(), 1);
    }

    proptest! {
        #[test]
        fn rule_filter_monotone_in_keywords(
            label in "[a-zA-Z :_]{1,20}",
            base in prop::collection::btree_set("[a-z]{1,4}", 0..4),
            extra in prop::collection::btree_set("[a-z]{1,4}", 0..4),
        ) {
            let small = DenoiseConfig { k_invalid: base.clone(), theta_necessity: 0.5 };
            let big = DenoiseConfig { k_invalid: base.union(&extra).cloned().collect(), theta_necessity: 0.5 };
            let r = RelationRef::new("P1", label);
            if rule_filter(&r, &small).unwrap() {
                prop_assert!(rule_filter(&r, &big).unwrap());
            }
        }

        #[test]
        fn output_is_ordered_subset(
            labels in prop::collection::vec("(spouse|director|wikidata:id|height|source url|genre)", 0..12),
        ) {
            let llm = Arc::new(StubLlm::new(vec![
                ScriptEntry::new("Relation: height\n", "0.1"),
            ]).with_default("0.9"));
            let s = services(llm);
            let cfg = DenoiseConfig::default();
            let items: Vec<_> = labels.iter().enumerate()
                .map(|(i, l)| triple(&format!("P{}", l.len()), l, &format!("o{i}"))).collect();
            let out = Denoiser::new(&s, &cfg).denoise(items.clone(), &Question::new("q", "x"));
            let mut it = items.iter();
            for k in &out.kept {
                prop_assert!(it.any(|c| c == k));
            }
            prop_assert_eq!(out.kept.len() + out.dropped_by_rule.len() + out.dropped_by_necessity.len(), items.len());
        }
    }
}
