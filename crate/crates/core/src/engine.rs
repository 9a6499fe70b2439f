//! Top-level route: classify, dispatch to a track, answer.

use std::sync::Arc;
use std::time::Duration;

use crate::answer::{flags, Answer, Question};
use crate::chain::{ChainBranch, ChainOutcome};
use crate::classifier::{Classification, Classifier};
use crate::config::{EmbeddingProviderKind, EngineConfig, KgProviderKind, LlmProviderKind, RerankProviderKind};
use crate::context::Services;
use crate::denoiser::{DenoiseOutcome, Denoiser};
use crate::error::{Error, Result};
use crate::kg::{KgStore, MemoryStore, SparqlClient, SparqlClientConfig};
use crate::llm::{HttpLlm, LlmProvider, PromptLibrary, StubLlm};
use crate::scorer::{
    Candidate, EmbeddingProvider, HashEmbedder, HttpEmbedder, HttpReranker, HybridScorer, LexicalReranker,
    RerankProvider,
};
use crate::transport::{HttpTransport, ReqwestTransport};
use crate::verify::VerifyBranch;

pub struct Engine {
    cfg: EngineConfig,
    services: Services,
}

impl Engine {
    pub fn new(cfg: EngineConfig, services: Services) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, services })
    }

    /// Build every provider named by `cfg`. Remote providers share
    /// `transport`; local ones never touch it.
    pub fn from_config(cfg: EngineConfig, transport: Arc<dyn HttpTransport>) -> Result<Self> {
        let llm: Arc<dyn LlmProvider> = match cfg.llm_provider {
            LlmProviderKind::Stub => {
                let path = cfg.stub_script.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("llm_provider = \"stub\" needs a stub script".into())
                })?;
                Arc::new(StubLlm::load(path)?)
            }
            LlmProviderKind::Http => Arc::new(HttpLlm::new(cfg.llm_url.clone(), transport.clone())),
        };
        Self::from_config_with_llm(cfg, llm, transport)
    }

    pub fn from_config_with_llm(
        cfg: EngineConfig,
        llm: Arc<dyn LlmProvider>,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<Self> {
        cfg.validate()?;
        let kg: Arc<dyn KgStore> = match cfg.kg_provider {
            KgProviderKind::Memory => {
                let path = cfg.kg_fixture.as_ref().expect("validated");
                Arc::new(MemoryStore::load(path).map_err(|e| match e {
                    Error::Io(io) => Error::InvalidInput(format!("cannot read KG fixture {}: {io}", path.display())),
                    other => other,
                })?)
            }
            KgProviderKind::Sparql => {
                let mut sc = SparqlClientConfig::new(cfg.sparql_url.clone());
                sc.retries = cfg.sparql_retries;
                sc.cache_dir = cfg.cache_dir.clone();
                Arc::new(SparqlClient::new(sc, transport.clone())?)
            }
        };
        let embedder: Arc<dyn EmbeddingProvider> = match cfg.embedding_provider {
            EmbeddingProviderKind::Hash => Arc::new(HashEmbedder::new(cfg.embedding_dimension)),
            EmbeddingProviderKind::Http => Arc::new(HttpEmbedder::new(
                cfg.embedding_url.clone(),
                cfg.embedding_dimension,
                transport.clone(),
            )),
        };
        let reranker: Arc<dyn RerankProvider> = match cfg.rerank_provider {
            RerankProviderKind::Lexical => Arc::new(LexicalReranker),
            RerankProviderKind::Http => Arc::new(HttpReranker::new(cfg.rerank_url.clone(), transport)),
        };
        let prompts = match &cfg.prompts_dir {
            Some(dir) => PromptLibrary::load_dir(dir)?,
            None => PromptLibrary::builtin(),
        };
        let mut services = Services::new(kg, llm, HybridScorer::new(embedder, reranker)).with_prompts(prompts);
        services.max_tokens = cfg.max_tokens;
        Self::new(cfg, services)
    }

    /// Shared blocking HTTP transport honouring `timeout_secs`.
    pub fn default_transport(cfg: &EngineConfig) -> Result<Arc<dyn HttpTransport>> {
        Ok(Arc::new(ReqwestTransport::new(Duration::from_secs(cfg.timeout_secs))?))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn services(&self) -> &Services {
        &self.services
    }

    pub fn classify(&self, q: &Question) -> Result<Classification> {
        Classifier::new(&self.services, self.cfg.default_track).classify(q)
    }

    pub fn run_parallel(&self, q: &Question) -> Result<Answer> {
        let (scoring, denoise, verify) = (self.cfg.scoring(), self.cfg.denoise(), self.cfg.verify());
        VerifyBranch::new(&self.services, &scoring, &denoise, &verify).run(q)
    }

    pub fn run_chain(&self, q: &Question) -> Result<ChainOutcome> {
        let (search, scoring, denoise) = (self.cfg.search(), self.cfg.scoring(), self.cfg.denoise());
        ChainBranch::new(&self.services, &search, &scoring, &denoise).run_outcome(q)
    }

    pub fn denoise(&self, candidates: Vec<Candidate>, q: &Question) -> DenoiseOutcome {
        let cfg = self.cfg.denoise();
        Denoiser::new(&self.services, &cfg).denoise(candidates, q)
    }

    /// Full pipeline. Failures come back as flagged answers.
    pub fn answer(&self, q: &Question) -> Answer {
        let class = match self.classify(q) {
            Ok(c) => c,
            Err(e) => {
                log::error!("classification of {} failed: {e}", q.id);
                let mut a = Answer::new(q.id.clone(), self.cfg.default_track);
                a.record_error(&e);
                return a;
            }
        };
        let result = match class.track {
            crate::QuestionType::Chained => self.run_chain(q).map(|o| o.answer),
            crate::QuestionType::Parallel => self.run_parallel(q),
        };
        let mut a = result.unwrap_or_else(|e| {
            log::error!("{} branch failed on {}: {e}", class.track, q.id);
            let mut a = Answer::new(q.id.clone(), class.track);
            a.record_error(&e);
            a
        });
        if class.fallback {
            a.flag(flags::CLASSIFIER_FALLBACK);
            a.warnings.push(format!("classifier reply {:?} was neither yes nor no", class.raw));
        }
        a
    }
}
