//! Two-stage hybrid scoring.
//!
//! Stage I ranks candidates by embedding cosine against the query and keeps
//! the top `top_n`. Stage II asks a reranker for a fine-grained score on the
//! survivors only and fuses it with the cosine:
//! `combined = alpha * rerank + (1 - alpha) * cos`.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::kg::{RelationRef, Triple};
use crate::text::{fnv1a, jaccard, tokens};
use crate::transport::HttpTransport;

pub const DEFAULT_ALPHA: f64 = 0.7;
pub const DEFAULT_TOP_N: usize = 50;
pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// What gets scored: a whole triple or a bare relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Candidate {
    Triple(Triple),
    Relation(RelationRef),
}

impl Candidate {
    pub fn relation(&self) -> &RelationRef {
        match self {
            Candidate::Triple(t) => &t.relation,
            Candidate::Relation(r) => r,
        }
    }

    pub fn as_triple(&self) -> Option<&Triple> {
        match self {
            Candidate::Triple(t) => Some(t),
            Candidate::Relation(_) => None,
        }
    }

    /// Text handed to the embedding and rerank providers.
    pub fn verbalize(&self) -> String {
        match self {
            Candidate::Triple(t) => t.verbalize(),
            Candidate::Relation(r) => r.name().to_string(),
        }
    }

    /// Deterministic tie-break key.
    pub fn key(&self) -> String {
        match self {
            Candidate::Triple(t) => t.key(),
            Candidate::Relation(r) => r.id.clone(),
        }
    }
}

impl From<Triple> for Candidate {
    fn from(t: Triple) -> Self {
        Candidate::Triple(t)
    }
}

impl From<RelationRef> for Candidate {
    fn from(r: RelationRef) -> Self {
        Candidate::Relation(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub payload: Candidate,
    pub cos: f64,
    pub rerank: Option<f64>,
    pub combined: Option<f64>,
}

impl ScoredCandidate {
    pub fn new(payload: Candidate, cos: f64) -> Self {
        Self {
            payload,
            cos,
            rerank: None,
            combined: None,
        }
    }

    pub fn with_rerank(mut self, rerank: f64) -> Self {
        self.rerank = Some(rerank);
        self
    }

    /// Fused score, or the cosine when fusion has not happened yet.
    pub fn score(&self) -> f64 {
        self.combined.unwrap_or(self.cos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub alpha: f64,
    pub top_n: usize,
    pub dimension: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            top_n: DEFAULT_TOP_N,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidConfig("top_n must be at least 1".into()));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn fuse(c: ScoredCandidate, cfg: &ScoringConfig) -> Result<ScoredCandidate> {
    let rerank = c.rerank.ok_or(Error::MissingStageScore("rerank"))?;
    let combined = cfg.alpha * rerank + (1.0 - cfg.alpha) * c.cos;
    Ok(ScoredCandidate {
        combined: Some(combined),
        ..c
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKey {
    Cos,
    /// Unfused candidates rank below every fused one.
    Combined,
}

impl ScoreKey {
    fn value(self, c: &ScoredCandidate) -> f64 {
        match self {
            ScoreKey::Cos => c.cos,
            ScoreKey::Combined => c.combined.unwrap_or(f64::NEG_INFINITY),
        }
    }
}

/// Descending by `key`, ties by ascending payload key.
pub fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate, key: ScoreKey) -> Ordering {
    key.value(b)
        .total_cmp(&key.value(a))
        .then_with(|| a.payload.key().cmp(&b.payload.key()))
}

pub fn top_n(mut candidates: Vec<ScoredCandidate>, n: usize, key: ScoreKey) -> Vec<ScoredCandidate> {
    candidates.sort_by(|a, b| rank_order(a, b, key));
    candidates.truncate(n);
    candidates
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

pub trait RerankProvider: Send + Sync {
    /// One relevance score per document, same order as `documents`.
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>>;
}

/// Bag-of-words embedding with tokens hashed into a fixed number of buckets.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn embed_one(&self, text: &str) -> Embedding {
        let mut v = vec![0.0; self.dimension];
        for tok in tokens(text) {
            v[(fnv1a(tok.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        Embedding(v)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Same score for every document.
#[derive(Debug, Clone, Copy)]
pub struct ConstantReranker(pub f64);

impl RerankProvider for ConstantReranker {
    fn rerank(&self, _query: &str, documents: &[String]) -> Result<Vec<f64>> {
        Ok(vec![self.0; documents.len()])
    }
}

/// Token-overlap relevance; a model-free stand-in for a cross-encoder.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

impl RerankProvider for LexicalReranker {
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>> {
        Ok(documents.iter().map(|d| jaccard(query, d)).collect())
    }
}

/// Posts `{texts}` and reads `{embeddings: [[f64]]}`.
pub struct HttpEmbedder {
    url: String,
    dimension: usize,
    transport: Arc<dyn HttpTransport>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, dimension: usize, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            url: url.into(),
            dimension,
            transport,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let reply = self.transport.post_json(&self.url, &json!({ "texts": texts }))?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(
            reply
                .get("embeddings")
                .cloned()
                .ok_or_else(|| Error::MalformedResponse("reply without `embeddings`".into()))?,
        )
        .map_err(|e| Error::MalformedResponse(e.to_string()))?;
        if rows.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "{} embeddings for {} texts",
                rows.len(),
                texts.len()
            )));
        }
        Ok(rows.into_iter().map(Embedding).collect())
    }
}

/// Posts `{query, documents}` and reads `{scores: [f64]}`.
pub struct HttpReranker {
    url: String,
    transport: Arc<dyn HttpTransport>,
}

impl HttpReranker {
    pub fn new(url: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            url: url.into(),
            transport,
        }
    }
}

impl RerankProvider for HttpReranker {
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>> {
        let reply = self
            .transport
            .post_json(&self.url, &json!({ "query": query, "documents": documents }))?;
        serde_json::from_value(
            reply
                .get("scores")
                .cloned()
                .ok_or_else(|| Error::MalformedResponse("reply without `scores`".into()))?,
        )
        .map_err(|e| Error::MalformedResponse(e.to_string()))
    }
}

#[derive(Clone)]
pub struct HybridScorer {
    embedder: Arc<dyn EmbeddingProvider>,
    reranker: Arc<dyn RerankProvider>,
}

impl HybridScorer {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, reranker: Arc<dyn RerankProvider>) -> Self {
        Self { embedder, reranker }
    }

    /// Score `candidates` against `query`; returns at most `cfg.top_n`
    /// candidates sorted by combined score.
    ///
    /// A zero embedding (text without any token) gets cosine 0.
    pub fn score_candidates(
        &self,
        query: &str,
        candidates: Vec<Candidate>,
        cfg: &ScoringConfig,
    ) -> Result<Vec<ScoredCandidate>> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let mut texts = Vec::with_capacity(candidates.len() + 1);
        texts.push(query.to_string());
        texts.extend(candidates.iter().map(Candidate::verbalize));
        let embeddings = self.embedder.embed(&texts)?;
        if embeddings.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "{} embeddings for {} texts",
                embeddings.len(),
                texts.len()
            )));
        }
        if let Some(bad) = embeddings.iter().find(|e| e.dimension() != cfg.dimension) {
            return Err(Error::DimensionMismatch {
                left: bad.dimension(),
                right: cfg.dimension,
            });
        }
        let query_vec = &embeddings[0];
        let stage_one: Vec<ScoredCandidate> = candidates
            .into_iter()
            .zip(&embeddings[1..])
            .map(|(c, e)| {
                let cos = match cosine(query_vec, e) {
                    Ok(v) => v,
                    Err(Error::ZeroVector) => 0.0,
                    Err(err) => return Err(err),
                };
                Ok(ScoredCandidate::new(c, cos))
            })
            .collect::<Result<_>>()?;
        let survivors = top_n(stage_one, cfg.top_n, ScoreKey::Cos);

        let docs: Vec<String> = survivors.iter().map(|c| c.payload.verbalize()).collect();
        let scores = self.reranker.rerank(query, &docs)?;
        if scores.len() != docs.len() {
            return Err(Error::MalformedResponse(format!(
                "{} rerank scores for {} documents",
                scores.len(),
                docs.len()
            )));
        }
        let fused = survivors
            .into_iter()
            .zip(scores)
            .map(|(c, s)| fuse(c.with_rerank(s.clamp(0.0, 1.0)), cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(top_n(fused, usize::MAX, ScoreKey::Combined))
    }
}
