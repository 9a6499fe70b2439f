use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{EntityRef, KgStore, RelationRef, Term, Triple};
use crate::error::{Error, Result};
use crate::llm::PromptTemplate;
use crate::transport::HttpTransport;

/// Row cap of the relation queries.
pub const RELATION_LIMIT: usize = 100;
pub const WIKIDATA_ENTITY: &str = "http://www.wikidata.org/entity/";
pub const WIKIDATA_DIRECT_PROPERTY: &str = "http://www.wikidata.org/prop/direct/";
const SPARQL_JSON: &str = "application/sparql-results+json";

/// The four query templates. Bodies use `str.format` brace escaping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SparqlTemplate {
    EntityId,
    EntityName,
    HeadRelations,
    TailRelations,
}

impl SparqlTemplate {
    pub const ALL: [SparqlTemplate; 4] = [
        SparqlTemplate::EntityId,
        SparqlTemplate::EntityName,
        SparqlTemplate::HeadRelations,
        SparqlTemplate::TailRelations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SparqlTemplate::EntityId => "get_entity_id",
            SparqlTemplate::EntityName => "get_entity_name",
            SparqlTemplate::HeadRelations => "get_head_relations",
            SparqlTemplate::TailRelations => "get_tail_relations",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            SparqlTemplate::EntityId => include_str!("../../sparql/get_entity_id.rq"),
            SparqlTemplate::EntityName => include_str!("../../sparql/get_entity_name.rq"),
            SparqlTemplate::HeadRelations => include_str!("../../sparql/get_head_relations.rq"),
            SparqlTemplate::TailRelations => include_str!("../../sparql/get_tail_relations.rq"),
        }
    }

    fn placeholder(self) -> &'static str {
        match self {
            SparqlTemplate::EntityId => "safe_name",
            SparqlTemplate::EntityName => "relation_id",
            SparqlTemplate::HeadRelations | SparqlTemplate::TailRelations => "wikidata_id",
        }
    }

    /// Render the query for `value`: a label for [`SparqlTemplate::EntityId`],
    /// an identifier otherwise. Labels are escaped; identifiers must be
    /// plain alphanumerics.
    pub fn render(self, value: &str) -> Result<String> {
        let filled = match self {
            SparqlTemplate::EntityId => escape_label(value)?,
            _ => {
                if value.is_empty() || !value.chars().all(|c| c.is_ascii_alphanumeric()) {
                    return Err(Error::InvalidInput(format!(
                        "`{value}` is not a valid identifier"
                    )));
                }
                value.to_string()
            }
        };
        PromptTemplate::new(self.name(), self.source()).render([(self.placeholder(), &*filled)])
    }
}

/// Make a label safe to embed in a double-quoted SPARQL string.
///
/// Backslashes and double quotes are escaped; empty labels and labels with
/// line breaks are rejected.
pub fn escape_label(label: &str) -> Result<String> {
    if label.is_empty() {
        return Err(Error::InvalidInput("empty entity label".into()));
    }
    if label.contains(['\n', '\r']) {
        return Err(Error::InvalidInput(format!(
            "entity label contains a line break: {label:?}"
        )));
    }
    Ok(label.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Response cache keyed by the exact query text, one file per query.
#[derive(Debug, Clone)]
pub struct QueryCache {
    dir: PathBuf,
}

impl QueryCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, query: &str) -> PathBuf {
        let digest = Sha256::digest(query.as_bytes());
        self.dir.join(format!("{}.json", hex::encode(digest)))
    }

    pub fn get(&self, query: &str) -> Option<String> {
        std::fs::read_to_string(self.path_for(query)).ok()
    }

    /// Write-then-rename so concurrent readers never observe partial files.
    pub fn put(&self, query: &str, body: &str) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(body.as_bytes())?;
        tmp.persist(self.path_for(query))
            .map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SparqlClientConfig {
    pub endpoint: String,
    /// Retries after the first attempt, for 5xx responses and timeouts.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl SparqlClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            retries: 3,
            backoff: Duration::from_millis(500),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ResultsDocument {
    results: ResultsBody,
}

#[derive(Debug, Deserialize)]
struct ResultsBody {
    bindings: Vec<HashMap<String, RdfValue>>,
}

#[derive(Debug, Clone, Deserialize)]
struct RdfValue {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(default)]
    datatype: Option<String>,
}

type Binding = HashMap<String, RdfValue>;

fn field<'a>(b: &'a Binding, name: &str) -> Result<&'a RdfValue> {
    b.get(name)
        .ok_or_else(|| Error::MalformedResponse(format!("binding without `{name}`")))
}

fn label_field(b: &Binding, name: &str) -> String {
    b.get(name).map(|v| v.value.clone()).unwrap_or_default()
}

/// Client for a Wikidata-compatible SPARQL endpoint.
pub struct SparqlClient {
    config: SparqlClientConfig,
    transport: Arc<dyn HttpTransport>,
    cache: Option<QueryCache>,
}

impl SparqlClient {
    pub fn new(config: SparqlClientConfig, transport: Arc<dyn HttpTransport>) -> Result<Self> {
        let cache = config.cache_dir.as_ref().map(QueryCache::new).transpose()?;
        Ok(Self {
            config,
            transport,
            cache,
        })
    }

    fn fetch(&self, query: &str) -> Result<String> {
        let mut attempt = 0;
        loop {
            let res = self.transport.get(
                &self.config.endpoint,
                &[("query", query), ("format", "json")],
                SPARQL_JSON,
            );
            match res {
                Err(Error::Transport { retryable: true, message }) if attempt < self.config.retries => {
                    let delay = self.config.backoff * 2u32.pow(attempt);
                    log::warn!("SPARQL request failed ({message}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn select(&self, query: &str) -> Result<Vec<Binding>> {
        log::debug!("SPARQL query:\n{query}");
        if let Some(body) = self.cache.as_ref().and_then(|c| c.get(query)) {
            if let Ok(doc) = serde_json::from_str::<ResultsDocument>(&body) {
                return Ok(doc.results.bindings);
            }
        }
        let body = self.fetch(query)?;
        let doc: ResultsDocument = serde_json::from_str(&body)
            .map_err(|e| Error::MalformedResponse(format!("SPARQL results: {e}")))?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(query, &body) {
                log::warn!("could not cache SPARQL response: {e}");
            }
        }
        Ok(doc.results.bindings)
    }

    fn object_term(v: &RdfValue, label: String) -> Result<Term> {
        match v.kind.as_str() {
            "uri" => match v.value.strip_prefix(WIKIDATA_ENTITY) {
                Some(id) if EntityRef::is_item_id(id) => {
                    Ok(Term::Entity(EntityRef::new(id, label)?))
                }
                _ => Ok(Term::literal(v.value.clone())),
            },
            "literal" | "typed-literal" | "bnode" => Ok(Term::Literal {
                value: v.value.clone(),
                datatype: v.datatype.clone(),
            }),
            other => Err(Error::MalformedResponse(format!("unknown RDF term type `{other}`"))),
        }
    }

    fn relation_of(b: &Binding) -> Result<RelationRef> {
        let iri = &field(b, "relation")?.value;
        let id = iri
            .strip_prefix(WIKIDATA_DIRECT_PROPERTY)
            .ok_or_else(|| Error::MalformedResponse(format!("not a direct property: {iri}")))?;
        Ok(RelationRef::new(id, label_field(b, "relationLabel")))
    }
}

impl KgStore for SparqlClient {
    fn resolve_entity_id(&self, label: &str) -> Result<EntityRef> {
        let query = SparqlTemplate::EntityId.render(label)?;
        let rows = self.select(&query)?;
        let row = rows
            .first()
            .ok_or_else(|| Error::NotFound(format!("entity labelled {label:?}")))?;
        let iri = &field(row, "item")?.value;
        let id = iri
            .strip_prefix(WIKIDATA_ENTITY)
            .ok_or_else(|| Error::MalformedResponse(format!("not an entity IRI: {iri}")))?;
        EntityRef::new(id, label).map_err(|e| Error::MalformedResponse(e.to_string()))
    }

    fn get_label(&self, relation: &RelationRef) -> Result<String> {
        let query = SparqlTemplate::EntityName.render(&relation.id)?;
        let rows = self.select(&query)?;
        let row = rows
            .first()
            .ok_or_else(|| Error::NotFound(format!("label of {}", relation.id)))?;
        Ok(field(row, "propertyLabel")?.value.clone())
    }

    fn head_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>> {
        let query = SparqlTemplate::HeadRelations.render(&entity.id)?;
        self.select(&query)?
            .iter()
            .take(RELATION_LIMIT)
            .map(|b| {
                let object = Self::object_term(field(b, "o")?, label_field(b, "oLabel"))?;
                Ok(Triple::new(entity.clone(), Self::relation_of(b)?, object))
            })
            .collect()
    }

    fn tail_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>> {
        let query = SparqlTemplate::TailRelations.render(&entity.id)?;
        let mut out = Vec::new();
        for b in self.select(&query)?.iter().take(RELATION_LIMIT) {
            let subject = Self::object_term(field(b, "s")?, label_field(b, "sLabel"))?;
            // Statements about lexemes or other non-item subjects are skipped.
            let Term::Entity(subject) = subject else {
                continue;
            };
            out.push(Triple::new(
                subject,
                Self::relation_of(b)?,
                Term::Entity(entity.clone()),
            ));
        }
        Ok(out)
    }

    /// Exact lookups of common capitalisation variants of `surface`.
    fn entity_candidates(&self, surface: &str) -> Result<Vec<EntityRef>> {
        let trimmed = surface.trim();
        let title: String = trimmed
            .split(' ')
            .map(|w| {
                let mut c = w.chars();
                c.next()
                    .map(|f| f.to_uppercase().chain(c).collect::<String>())
                    .unwrap_or_default()
            })
            .collect::<Vec<_>>()
            .join(" ");
        let mut variants = vec![trimmed.to_string(), title, trimmed.to_lowercase()];
        variants.dedup();
        let mut found = Vec::new();
        for v in variants.iter().filter(|v| !v.is_empty() && v.as_str() != surface) {
            match self.resolve_entity_id(v) {
                Ok(e) => found.push(e),
                Err(Error::NotFound(_)) | Err(Error::InvalidInput(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(found)
    }
}
