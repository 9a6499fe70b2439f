//! Knowledge-graph access.
//!
//! Everything downstream talks to a [`KgStore`]. Two implementations exist:
//! [`SparqlClient`] for a live Wikidata-style endpoint and [`MemoryStore`], an
//! immutable in-memory triple store loaded from a fixture file.

mod memory;
mod sparql;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use memory::{MemoryStore, MemoryStoreBuilder};
pub use sparql::{
    escape_label, QueryCache, SparqlClient, SparqlClientConfig, SparqlTemplate, RELATION_LIMIT,
    WIKIDATA_DIRECT_PROPERTY, WIKIDATA_ENTITY,
};

/// A KG item, identified by its QID.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub id: String,
    pub label: String,
}

impl EntityRef {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if !Self::is_item_id(&id) {
            return Err(Error::InvalidInput(format!("`{id}` is not an item identifier")));
        }
        Ok(Self {
            id,
            label: label.into(),
        })
    }

    /// `Q` followed by alphanumerics containing at least one digit.
    ///
    /// Live Wikidata ids are always `Q<digits>`; fixture graphs also use
    /// synthetic ids such as `QF1`.
    pub fn is_item_id(id: &str) -> bool {
        let Some(rest) = id.strip_prefix('Q') else {
            return false;
        };
        !rest.is_empty()
            && rest.chars().all(|c| c.is_ascii_alphanumeric())
            && rest.chars().any(|c| c.is_ascii_digit())
    }

    /// Display name, falling back to the id when no label is known.
    pub fn name(&self) -> &str {
        if self.label.is_empty() {
            &self.id
        } else {
            &self.label
        }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationRef {
    pub id: String,
    /// Empty until resolved.
    pub label: String,
}

impl RelationRef {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
        }
    }

    pub fn name(&self) -> &str {
        if self.label.is_empty() {
            &self.id
        } else {
            &self.label
        }
    }
}

/// Object position of a triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Entity(EntityRef),
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
    },
}

impl Term {
    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: None,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Term::Entity(e) => e.name(),
            Term::Literal { value, .. } => value,
        }
    }

    /// Stable identifier used for ordering and set membership.
    pub fn key(&self) -> String {
        match self {
            Term::Entity(e) => e.id.clone(),
            Term::Literal { value, .. } => format!("\"{value}\""),
        }
    }

    pub fn as_entity(&self) -> Option<&EntityRef> {
        match self {
            Term::Entity(e) => Some(e),
            Term::Literal { .. } => None,
        }
    }
}

/// A directed fact `subject --relation--> object`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityRef,
    pub relation: RelationRef,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: EntityRef, relation: RelationRef, object: Term) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }

    /// `"<subject label> <relation label> <object label>"`.
    pub fn verbalize(&self) -> String {
        format!(
            "{} {} {}",
            self.subject.name(),
            self.relation.name(),
            self.object.label()
        )
    }

    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.subject.id, self.relation.id, self.object.key())
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.subject.name(),
            self.relation.name(),
            self.object.label()
        )
    }
}

/// All triples touching one entity, split by the entity's position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationSet {
    /// Entity as subject.
    pub head: Vec<Triple>,
    /// Entity as object.
    pub tail: Vec<Triple>,
}

impl RelationSet {
    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.head.iter().chain(self.tail.iter())
    }

    pub fn len(&self) -> usize {
        self.head.len() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty() && self.tail.is_empty()
    }
}

/// Read access to a knowledge graph.
///
/// Implementations must be shareable across threads; every method is a pure
/// read against the graph.
pub trait KgStore: Send + Sync {
    /// First item whose English label equals `label` exactly.
    fn resolve_entity_id(&self, label: &str) -> Result<EntityRef>;

    /// English label of a property.
    fn get_label(&self, relation: &RelationRef) -> Result<String>;

    /// Triples with `entity` as subject, at most [`RELATION_LIMIT`].
    fn head_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>>;

    /// Triples with `entity` as object, at most [`RELATION_LIMIT`].
    fn tail_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>>;

    /// Entities worth comparing against `surface` when exact lookup fails.
    fn entity_candidates(&self, _surface: &str) -> Result<Vec<EntityRef>> {
        Ok(Vec::new())
    }

    fn relations(&self, entity: &EntityRef) -> Result<RelationSet> {
        Ok(RelationSet {
            head: self.head_relations(entity)?,
            tail: self.tail_relations(entity)?,
        })
    }
}

impl<T: KgStore + ?Sized> KgStore for std::sync::Arc<T> {
    fn resolve_entity_id(&self, label: &str) -> Result<EntityRef> {
        (**self).resolve_entity_id(label)
    }
    fn get_label(&self, relation: &RelationRef) -> Result<String> {
        (**self).get_label(relation)
    }
    fn head_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>> {
        (**self).head_relations(entity)
    }
    fn tail_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>> {
        (**self).tail_relations(entity)
    }
    fn entity_candidates(&self, surface: &str) -> Result<Vec<EntityRef>> {
        (**self).entity_candidates(surface)
    }
}

/// Fill in empty relation labels through [`KgStore::get_label`].
///
/// Lookups that fail leave the label empty and are reported in `warnings`.
pub fn resolve_relation_labels(
    kg: &dyn KgStore,
    triples: &mut [Triple],
    warnings: &mut Vec<String>,
) -> Result<()> {
    let mut resolved: std::collections::HashMap<String, Option<String>> = Default::default();
    for t in triples.iter_mut().filter(|t| t.relation.label.is_empty()) {
        let id = t.relation.id.clone();
        let label = match resolved.get(&id) {
            Some(l) => l.clone(),
            None => {
                let l = match kg.get_label(&t.relation) {
                    Ok(l) => Some(l),
                    Err(Error::NotFound(_)) => {
                        warnings.push(format!("no label for relation {id}"));
                        None
                    }
                    Err(e) => return Err(e),
                };
                resolved.insert(id, l.clone());
                l
            }
        };
        if let Some(l) = label {
            t.relation.label = l;
        }
    }
    Ok(())
}
