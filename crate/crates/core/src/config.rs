//! Engine configuration: one flat TOML document, overridable through
//! `DTKG_<KEY>` environment variables.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::answer::QuestionType;
use crate::chain::{self, SearchConfig, SufficiencyMode};
use crate::denoiser::{self, DenoiseConfig};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_TAU;
use crate::llm::DEFAULT_MAX_TOKENS;
use crate::scorer::ScoringConfig;
use crate::verify::{VerifyConfig, DEFAULT_LINK_FLOOR, DEFAULT_VERIFY_TOP_K};

pub const ENV_PREFIX: &str = "DTKG_";
pub const DEFAULT_SPARQL_URL: &str = "https://query.wikidata.org/sparql";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KgProviderKind {
    /// In-memory store loaded from `kg_fixture`.
    Memory,
    Sparql,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmProviderKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    /// Hashed bag-of-words vectors; no model needed.
    Hash,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankProviderKind {
    /// Token Jaccard overlap.
    Lexical,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub kg_provider: KgProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kg_fixture: Option<PathBuf>,
    pub sparql_url: String,
    pub sparql_retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub timeout_secs: u64,

    pub llm_provider: LlmProviderKind,
    pub llm_url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stub_script: Option<PathBuf>,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,

    pub embedding_provider: EmbeddingProviderKind,
    pub embedding_url: String,
    pub embedding_dimension: usize,
    pub rerank_provider: RerankProviderKind,
    pub rerank_url: String,
    pub alpha: f64,
    pub top_n: usize,

    pub verify_top_k: usize,
    pub link_floor: f64,

    pub d_max: usize,
    pub w_max: usize,
    pub theta_search: f64,
    pub llm_select_trigger: usize,
    pub path_top_k: usize,
    pub expand_budget: usize,
    pub sufficiency_mode: SufficiencyMode,

    pub theta_necessity: f64,
    pub k_invalid: BTreeSet<String>,

    pub tau: f64,
    pub default_track: QuestionType,
    pub parallelism: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let scoring = ScoringConfig::default();
        let search = SearchConfig::default();
        Self {
            kg_provider: KgProviderKind::Sparql,
            kg_fixture: None,
            sparql_url: DEFAULT_SPARQL_URL.to_string(),
            sparql_retries: 3,
            cache_dir: None,
            timeout_secs: 30,
            llm_provider: LlmProviderKind::Http,
            llm_url: "http://127.0.0.1:8080/complete".to_string(),
            stub_script: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            prompts_dir: None,
            embedding_provider: EmbeddingProviderKind::Hash,
            embedding_url: "http://127.0.0.1:8081/embed".to_string(),
            embedding_dimension: scoring.dimension,
            rerank_provider: RerankProviderKind::Lexical,
            rerank_url: "http://127.0.0.1:8082/rerank".to_string(),
            alpha: scoring.alpha,
            top_n: scoring.top_n,
            verify_top_k: DEFAULT_VERIFY_TOP_K,
            link_floor: DEFAULT_LINK_FLOOR,
            d_max: chain::DEFAULT_D_MAX,
            w_max: search.w_max,
            theta_search: search.theta_search,
            llm_select_trigger: search.llm_select_trigger,
            path_top_k: search.path_top_k,
            expand_budget: search.expand_budget,
            sufficiency_mode: search.sufficiency_mode,
            theta_necessity: denoiser::DEFAULT_THETA_NECESSITY,
            k_invalid: denoiser::default_k_invalid(),
            tau: DEFAULT_TAU,
            default_track: QuestionType::Chained,
            parallelism: 4,
        }
    }
}

impl EngineConfig {
    /// Offline configuration: fixture KG, scripted LLM, local scorers.
    pub fn stub(kg_fixture: impl Into<PathBuf>) -> Self {
        Self {
            kg_provider: KgProviderKind::Memory,
            kg_fixture: Some(kg_fixture.into()),
            llm_provider: LlmProviderKind::Stub,
            ..Self::default()
        }
    }

    /// True when no provider needs the network.
    pub fn is_offline(&self) -> bool {
        self.kg_provider == KgProviderKind::Memory
            && self.llm_provider == LlmProviderKind::Stub
            && self.embedding_provider == EmbeddingProviderKind::Hash
            && self.rerank_provider == RerankProviderKind::Lexical
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            alpha: self.alpha,
            top_n: self.top_n,
            dimension: self.embedding_dimension,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            d_max: self.d_max,
            w_max: self.w_max,
            theta_search: self.theta_search,
            llm_select_trigger: self.llm_select_trigger,
            path_top_k: self.path_top_k,
            expand_budget: self.expand_budget,
            sufficiency_mode: self.sufficiency_mode,
            link_floor: self.link_floor,
        }
    }

    pub fn denoise(&self) -> DenoiseConfig {
        DenoiseConfig {
            k_invalid: self.k_invalid.clone(),
            theta_necessity: self.theta_necessity,
        }
        .normalized()
    }

    pub fn verify(&self) -> VerifyConfig {
        VerifyConfig {
            top_k: self.verify_top_k,
            link_floor: self.link_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring().validate()?;
        self.search().validate()?;
        self.denoise().validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.verify_top_k == 0 {
            return bad("verify_top_k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau outside [0, 1]");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1");
        }
        if self.kg_provider == KgProviderKind::Memory && self.kg_fixture.is_none() {
            return bad("kg_provider = \"memory\" needs kg_fixture");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Parse `text`, apply `overrides` (key, raw value), validate.
    /// Relative paths are resolved against `base_dir`.
    pub fn parse_with_overrides<I, K, V>(text: &str, overrides: I, base_dir: Option<&Path>) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let defaults = toml::Table::try_from(Self::default()).expect("defaults serialize");
        for (key, raw) in overrides {
            let key = key.as_ref().to_ascii_lowercase();
            if !Self::KEYS.contains(&key.as_str()) {
                log::warn!("ignoring override for unknown config key {key}");
                continue;
            }
            let value = override_value(defaults.get(&key), &key, raw.as_ref());
            table.insert(key, value);
        }
        let mut cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        if let Some(base) = base_dir {
            for p in [&mut cfg.kg_fixture, &mut cfg.cache_dir, &mut cfg.stub_script, &mut cfg.prompts_dir]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load `path` (or defaults when `None`) and apply `DTKG_*` variables.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let env = std::env::vars().filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX).map(|key| (key.to_string(), v))
        });
        Self::parse_with_overrides(&text, env, path.and_then(Path::parent))
    }

    pub const KEYS: &'static [&'static str] = &[
        "kg_provider",
        "kg_fixture",
        "sparql_url",
        "sparql_retries",
        "cache_dir",
        "timeout_secs",
        "llm_provider",
        "llm_url",
        "stub_script",
        "max_tokens",
        "prompts_dir",
        "embedding_provider",
        "embedding_url",
        "embedding_dimension",
        "rerank_provider",
        "rerank_url",
        "alpha",
        "top_n",
        "verify_top_k",
        "link_floor",
        "d_max",
        "w_max",
        "theta_search",
        "llm_select_trigger",
        "path_top_k",
        "expand_budget",
        "sufficiency_mode",
        "theta_necessity",
        "k_invalid",
        "tau",
        "default_track",
        "parallelism",
    ];
}

/// Interpret an environment string with the type of the key's default.
fn override_value(default: Option<&toml::Value>, key: &str, raw: &str) -> toml::Value {
    use toml::Value;
    let raw = raw.trim();
    match default {
        Some(Value::Integer(_)) => raw.parse().map(Value::Integer).unwrap_or_else(|_| Value::String(raw.into())),
        Some(Value::Float(_)) => raw.parse().map(Value::Float).unwrap_or_else(|_| Value::String(raw.into())),
        Some(Value::Boolean(_)) => raw.parse().map(Value::Boolean).unwrap_or_else(|_| Value::String(raw.into())),
        Some(Value::Array(_)) if key == "k_invalid" => Value::Array(
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.into()))
                .collect(),
        ),
        _ => Value::String(raw.into()),
    }
}
