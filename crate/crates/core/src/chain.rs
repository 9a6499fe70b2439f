//! Chained multi-hop track.
//!
//! Starting from the question's central entity, paths are grown depth-first.
//! Each expansion retrieves every triple touching the path's tip (as subject
//! or object), drops administrative relations, scores the rest against the
//! question with the hybrid scorer, and keeps at most `w_max` relations whose
//! combined score clears `theta_search`. After every expansion the new paths
//! are checked for sufficiency; the first sufficient path ends the search.
//! The answer is generated from the triples of the best paths only.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::answer::{flags, Answer, Question, QuestionType};
use crate::context::Services;
use crate::denoiser::{DenoiseConfig, Denoiser};
use crate::error::{Error, Result};
use crate::kg::{resolve_relation_labels, EntityRef, RelationRef, Term, Triple};
use crate::llm::{parse_yes_no, PromptName};
use crate::scorer::{Candidate, ScoredCandidate, ScoringConfig};
use crate::verify::{link_surface, DEFAULT_LINK_FLOOR};

pub const DEFAULT_D_MAX: usize = 3;
pub const DEFAULT_W_MAX: usize = 5;
pub const DEFAULT_THETA_SEARCH: f64 = 0.3;
pub const DEFAULT_LLM_SELECT_TRIGGER: usize = 8;
pub const DEFAULT_PATH_TOP_K: usize = 3;
pub const DEFAULT_EXPAND_BUDGET: usize = 500;
/// Upper bound on relations picked by the LLM selection step.
pub const LLM_SELECT_MAX: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Tip is the subject; the hop follows the relation forwards.
    Head,
    /// Tip is the object; the hop follows the relation backwards.
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub relation: RelationRef,
    pub direction: Direction,
    pub next: Term,
    pub relation_score: f64,
    /// The traversed triple in its stored direction.
    pub triple: Triple,
}

impl Hop {
    /// Build the hop that leaves `from` along `triple`.
    pub fn from_triple(from: &EntityRef, triple: Triple, relation_score: f64) -> Self {
        let (direction, next) = if triple.subject.id == from.id {
            (Direction::Head, triple.object.clone())
        } else {
            (Direction::Tail, Term::Entity(triple.subject.clone()))
        };
        Self {
            relation: triple.relation.clone(),
            direction,
            next,
            relation_score,
            triple,
        }
    }

    pub fn describe(&self) -> String {
        match self.direction {
            Direction::Head => format!("-[{}]-> {}", self.relation.name(), self.next.label()),
            Direction::Tail => format!("<-[{}]- {} (inverse)", self.relation.name(), self.next.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub origin: EntityRef,
    pub hops: Vec<Hop>,
}

impl ReasoningPath {
    pub fn new(origin: EntityRef) -> Self {
        Self {
            origin,
            hops: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.hops.len()
    }

    pub fn tip(&self) -> Term {
        self.hops
            .last()
            .map(|h| h.next.clone())
            .unwrap_or_else(|| Term::Entity(self.origin.clone()))
    }

    /// Product of the hop scores; 1 for the empty path.
    pub fn score(&self) -> f64 {
        path_score(self)
    }

    pub fn extend(&self, hop: Hop) -> Self {
        let mut p = self.clone();
        p.hops.push(hop);
        p
    }

    /// Ids of every entity on the path, origin included.
    pub fn entity_ids(&self) -> HashSet<&str> {
        std::iter::once(self.origin.id.as_str())
            .chain(self.hops.iter().filter_map(|h| h.next.as_entity().map(|e| e.id.as_str())))
            .collect()
    }

    /// One `(subject, relation, object)` line per hop.
    pub fn verbalize(&self) -> String {
        if self.hops.is_empty() {
            return format!("(start at {})", self.origin.name());
        }
        self.hops
            .iter()
            .map(|h| h.triple.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Hop sequence as `relation/direction/next` triples, for comparisons.
    pub fn signature(&self) -> Vec<(String, Direction, String)> {
        self.hops
            .iter()
            .map(|h| (h.relation.id.clone(), h.direction, h.next.key()))
            .collect()
    }
}

pub fn path_score(p: &ReasoningPath) -> f64 {
    p.hops.iter().map(|h| h.relation_score).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SufficiencyMode {
    /// Judge every new path produced by an expansion.
    #[default]
    PerExpansion,
    /// Never judge; search runs to exhaustion.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub d_max: usize,
    pub w_max: usize,
    pub theta_search: f64,
    /// LLM selection fires when more candidates than this clear the threshold.
    pub llm_select_trigger: usize,
    /// Number of best paths handed to answer generation.
    pub path_top_k: usize,
    /// Maximum expansions per question.
    pub expand_budget: usize,
    pub sufficiency_mode: SufficiencyMode,
    pub link_floor: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            d_max: DEFAULT_D_MAX,
            w_max: DEFAULT_W_MAX,
            theta_search: DEFAULT_THETA_SEARCH,
            llm_select_trigger: DEFAULT_LLM_SELECT_TRIGGER,
            path_top_k: DEFAULT_PATH_TOP_K,
            expand_budget: DEFAULT_EXPAND_BUDGET,
            sufficiency_mode: SufficiencyMode::PerExpansion,
            link_floor: DEFAULT_LINK_FLOOR,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.d_max == 0 {
            return bad("d_max must be at least 1");
        }
        if self.w_max == 0 {
            return bad("w_max must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.theta_search) {
            return bad("theta_search outside [0, 1]");
        }
        if self.path_top_k == 0 {
            return bad("path_top_k must be at least 1");
        }
        if self.expand_budget == 0 {
            return bad("expand_budget must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.link_floor) {
            return bad("link_floor outside [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Expansion {
    /// One extended path per kept relation, best first.
    pub children: Vec<ReasoningPath>,
    /// Candidates that cleared the threshold, before the width cut.
    pub above_threshold: usize,
    pub llm_selection_fired: bool,
    pub warnings: Vec<String>,
}

/// One visited node of the search tree, in visit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploredNode {
    pub depth: usize,
    pub hop: Hop,
    pub path_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sufficient: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub answer: Answer,
    pub central_entity: Option<EntityRef>,
    pub explored: Vec<ExploredNode>,
    /// Maximal paths reached by the search, plus the sufficient path if any.
    pub emitted: Vec<ReasoningPath>,
    pub expand_calls: usize,
}

enum Flow {
    Continue,
    Stop,
}

struct SearchState {
    emitted: Vec<ReasoningPath>,
    explored: Vec<ExploredNode>,
    expand_calls: usize,
    budget_hit: bool,
    sufficient: Option<ReasoningPath>,
    warnings: Vec<String>,
}

pub struct ChainBranch<'a> {
    services: &'a Services,
    search: &'a SearchConfig,
    scoring: &'a ScoringConfig,
    denoise: &'a DenoiseConfig,
}

impl<'a> ChainBranch<'a> {
    pub fn new(
        services: &'a Services,
        search: &'a SearchConfig,
        scoring: &'a ScoringConfig,
        denoise: &'a DenoiseConfig,
    ) -> Self {
        Self {
            services,
            search,
            scoring,
            denoise,
        }
    }

    pub fn extract_central_entity(&self, q: &Question) -> Result<EntityRef> {
        let reply = self
            .services
            .ask(PromptName::ExtractEntity, [("question", q.text.as_str())])?;
        let surface = reply
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_default()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '`')
            .trim_end_matches('.')
            .trim();
        link_surface(self.services.kg.as_ref(), surface, self.search.link_floor)
    }

    /// Grow `path` by one hop. Returns no children at a literal tip, at the
    /// depth limit, or when nothing clears the threshold.
    pub fn expand(&self, path: &ReasoningPath, q: &Question) -> Result<Expansion> {
        let mut out = Expansion::default();
        let Term::Entity(tip) = path.tip() else {
            return Ok(out);
        };
        if path.depth() >= self.search.d_max {
            return Ok(out);
        }
        let kg = self.services.kg.as_ref();
        let mut triples: Vec<Triple> = kg.relations(&tip)?.all().cloned().collect();
        let on_path = path.entity_ids();
        triples.retain(|t| {
            let next = if t.subject.id == tip.id {
                t.object.as_entity().map(|e| e.id.as_str())
            } else {
                Some(t.subject.id.as_str())
            };
            next.is_none_or(|id| !on_path.contains(id))
        });
        resolve_relation_labels(kg, &mut triples, &mut out.warnings)?;

        let denoiser = Denoiser::new(self.services, self.denoise);
        let candidates: Vec<Candidate> = triples.into_iter().map(Candidate::Triple).collect();
        let (candidates, _) = denoiser.rule_layer(candidates, Candidate::relation, &mut out.warnings);
        let scored = self
            .services
            .scorer
            .score_candidates(&q.text, candidates, self.scoring)?;
        let (scored, _) =
            denoiser.necessity_layer(scored, |c| c.payload.relation(), q, &mut out.warnings);

        let passing: Vec<ScoredCandidate> = scored
            .into_iter()
            .filter(|c| c.score() >= self.search.theta_search)
            .collect();
        out.above_threshold = passing.len();
        let mut kept: Vec<ScoredCandidate> = passing.into_iter().take(self.search.w_max).collect();
        if out.above_threshold > self.search.llm_select_trigger && kept.len() > LLM_SELECT_MAX {
            out.llm_selection_fired = true;
            kept = self.select_relations(&tip, &kept, q, &mut out.warnings)?;
        }

        out.children = kept
            .into_iter()
            .filter_map(|c| {
                let score = c.score();
                match c.payload {
                    Candidate::Triple(t) => Some(path.extend(Hop::from_triple(&tip, t, score))),
                    Candidate::Relation(_) => None,
                }
            })
            .collect();
        Ok(out)
    }

    fn select_relations(
        &self,
        tip: &EntityRef,
        kept: &[ScoredCandidate],
        q: &Question,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<ScoredCandidate>> {
        let listing = kept
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {}", i + 1, c.payload.as_triple().map(|t| t.to_string()).unwrap_or_default()))
            .collect::<Vec<_>>()
            .join("\n");
        let reply = self.services.ask(
            PromptName::SelectRelations,
            [
                ("question", q.text.as_str()),
                ("entity", tip.name()),
                ("candidates", listing.as_str()),
            ],
        )?;
        let picked = parse_selection(&reply, kept);
        if picked.is_empty() {
            warnings.push(format!(
                "relation selection reply {reply:?} named no candidate; kept the top {LLM_SELECT_MAX}"
            ));
            return Ok(kept.iter().take(LLM_SELECT_MAX).cloned().collect());
        }
        Ok(picked.into_iter().map(|i| kept[i].clone()).collect())
    }

    /// LLM judgment of whether `path` answers `q`; unparseable means no.
    pub fn check_sufficiency(&self, path: &ReasoningPath, q: &Question) -> Result<bool> {
        let verbal = path.verbalize();
        let reply = self.services.ask(
            PromptName::Sufficiency,
            [("question", q.text.as_str()), ("path", verbal.as_str())],
        )?;
        Ok(parse_yes_no(&reply).unwrap_or(false))
    }

    fn visit(&self, path: &ReasoningPath, q: &Question, st: &mut SearchState) -> Result<Flow> {
        if path.depth() >= self.search.d_max {
            st.emitted.push(path.clone());
            return Ok(Flow::Continue);
        }
        if st.expand_calls >= self.search.expand_budget {
            st.budget_hit = true;
            if path.depth() > 0 {
                st.emitted.push(path.clone());
            }
            return Ok(Flow::Continue);
        }
        st.expand_calls += 1;
        let expansion = self.expand(path, q)?;
        st.warnings.extend(expansion.warnings);
        if expansion.children.is_empty() {
            if path.depth() > 0 {
                st.emitted.push(path.clone());
            }
            return Ok(Flow::Continue);
        }
        for child in expansion.children {
            let hop = child.hops.last().cloned().expect("child has a hop");
            let sufficient = match self.search.sufficiency_mode {
                SufficiencyMode::PerExpansion => Some(self.check_sufficiency(&child, q)?),
                SufficiencyMode::Disabled => None,
            };
            st.explored.push(ExploredNode {
                depth: child.depth(),
                hop,
                path_score: child.score(),
                sufficient,
            });
            if sufficient == Some(true) {
                st.emitted.push(child.clone());
                st.sufficient = Some(child);
                return Ok(Flow::Stop);
            }
            if let Flow::Stop = self.visit(&child, q, st)? {
                return Ok(Flow::Stop);
            }
        }
        Ok(Flow::Continue)
    }

    /// Depth-first search from `origin` without answer generation.
    pub fn search(&self, origin: &EntityRef, q: &Question) -> Result<ChainOutcome> {
        let mut st = SearchState {
            emitted: Vec::new(),
            explored: Vec::new(),
            expand_calls: 0,
            budget_hit: false,
            sufficient: None,
            warnings: Vec::new(),
        };
        self.visit(&ReasoningPath::new(origin.clone()), q, &mut st)?;

        let mut answer = Answer::new(q.id.clone(), QuestionType::Chained);
        answer.warnings = st.warnings;
        if st.budget_hit {
            answer.flag(flags::BUDGET_EXHAUSTED);
        }
        answer.supporting_paths = match &st.sufficient {
            Some(p) => {
                answer.flag(flags::EARLY_STOP);
                vec![p.clone()]
            }
            None => {
                answer.flag(flags::INSUFFICIENT);
                best_paths(&st.emitted, self.search.path_top_k)
            }
        };
        Ok(ChainOutcome {
            answer,
            central_entity: Some(origin.clone()),
            explored: st.explored,
            emitted: st.emitted,
            expand_calls: st.expand_calls,
        })
    }

    /// Generate the answer text from the triples of `paths` only.
    pub fn generate(&self, q: &Question, paths: &[ReasoningPath]) -> Result<String> {
        let context = grounding_context(paths);
        Ok(self
            .services
            .ask(
                PromptName::Generate,
                [("question", q.text.as_str()), ("triples", context.as_str())],
            )?
            .trim()
            .to_string())
    }

    pub fn run_outcome(&self, q: &Question) -> Result<ChainOutcome> {
        let origin = match self.extract_central_entity(q) {
            Ok(e) => e,
            Err(Error::LinkFailure(s)) => {
                let mut answer = Answer::new(q.id.clone(), QuestionType::Chained);
                answer.flag(flags::NO_CENTRAL_ENTITY);
                answer.flag(flags::INSUFFICIENT);
                answer.warnings.push(format!("could not link central entity {s:?}"));
                return Ok(ChainOutcome {
                    answer,
                    central_entity: None,
                    explored: Vec::new(),
                    emitted: Vec::new(),
                    expand_calls: 0,
                });
            }
            Err(e) => return Err(e),
        };
        let mut outcome = self.search(&origin, q)?;
        if !outcome.answer.supporting_paths.is_empty() {
            outcome.answer.text = self.generate(q, &outcome.answer.supporting_paths)?;
        }
        Ok(outcome)
    }

    pub fn run(&self, q: &Question) -> Result<Answer> {
        Ok(self.run_outcome(q)?.answer)
    }
}

/// Highest-scoring paths first; ties by hop signature.
pub fn best_paths(paths: &[ReasoningPath], k: usize) -> Vec<ReasoningPath> {
    let mut ranked: Vec<&ReasoningPath> = paths.iter().filter(|p| p.depth() > 0).collect();
    ranked.sort_by(|a, b| {
        b.score()
            .total_cmp(&a.score())
            .then_with(|| a.signature().cmp(&b.signature()))
    });
    ranked.into_iter().take(k).cloned().collect()
}

/// Distinct triples of `paths`, one per line, in path order.
pub fn grounding_context(paths: &[ReasoningPath]) -> String {
    let mut seen = HashSet::new();
    let mut lines = Vec::new();
    for p in paths {
        for h in &p.hops {
            if seen.insert(h.triple.key()) {
                lines.push(h.triple.to_string());
            }
        }
    }
    lines.join("\n")
}

/// Indices of the candidates named in a selection reply, at most
/// [`LLM_SELECT_MAX`]. Entries are 1-based numbers or relation labels.
pub fn parse_selection(reply: &str, kept: &[ScoredCandidate]) -> Vec<usize> {
    let mut picked: Vec<usize> = Vec::new();
    for item in reply.split(['\n', ',', ';']) {
        if picked.len() == LLM_SELECT_MAX {
            break;
        }
        let item = item
            .trim()
            .trim_start_matches(['-', '*', '•'])
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '`');
        if item.is_empty() {
            continue;
        }
        let digits: String = item.chars().take_while(char::is_ascii_digit).collect();
        let index = if !digits.is_empty() {
            digits
                .parse::<usize>()
                .ok()
                .filter(|n| (1..=kept.len()).contains(n))
                .map(|n| n - 1)
        } else {
            let name = item.trim_end_matches('.').trim().to_lowercase();
            (0..kept.len()).find(|&i| {
                !picked.contains(&i)
                    && (kept[i].payload.relation().name().to_lowercase() == name
                        || kept[i].payload.verbalize().to_lowercase() == name)
            })
        };
        if let Some(i) = index {
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
    }
    picked
}
