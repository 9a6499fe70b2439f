use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::sparql::{escape_label, RELATION_LIMIT};
use super::{EntityRef, KgStore, RelationRef, Term, Triple};
use crate::error::{Error, Result};

/// Immutable in-memory triple store.
///
/// Built once through [`MemoryStoreBuilder`] or from a fixture file, then
/// shared read-only. Label lookup is exact and case-sensitive; when several
/// items share a label the first one loaded wins.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    triples: Vec<Triple>,
    by_subject: HashMap<String, Vec<usize>>,
    by_object: HashMap<String, Vec<usize>>,
    entities: Vec<EntityRef>,
    entity_by_label: HashMap<String, usize>,
    relation_labels: HashMap<String, String>,
}

#[derive(Debug, Default)]
pub struct MemoryStoreBuilder {
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    entities: Vec<EntityRef>,
    entity_index: HashMap<String, usize>,
    relation_labels: HashMap<String, String>,
}

impl MemoryStoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register an entity without any triple. Existing labels are kept.
    pub fn entity(&mut self, id: &str, label: &str) -> Result<EntityRef> {
        if let Some(&i) = self.entity_index.get(id) {
            if self.entities[i].label.is_empty() && !label.is_empty() {
                self.entities[i].label = label.to_string();
            }
            return Ok(self.entities[i].clone());
        }
        let e = EntityRef::new(id, label)?;
        self.entity_index.insert(id.to_string(), self.entities.len());
        self.entities.push(e.clone());
        Ok(e)
    }

    pub fn relation(&mut self, id: &str, label: &str) -> RelationRef {
        if id.is_empty() {
            return RelationRef::new(id, label);
        }
        let stored = self
            .relation_labels
            .entry(id.to_string())
            .or_insert_with(|| label.to_string());
        if stored.is_empty() {
            *stored = label.to_string();
        }
        RelationRef::new(id, stored.clone())
    }

    pub fn triple(
        &mut self,
        subject: (&str, &str),
        relation: (&str, &str),
        object: Term,
    ) -> Result<&mut Self> {
        if relation.0.is_empty() {
            return Err(Error::InvalidInput("empty relation id".into()));
        }
        let subject = self.entity(subject.0, subject.1)?;
        let relation = self.relation(relation.0, relation.1);
        let object = match object {
            Term::Entity(e) => Term::Entity(self.entity(&e.id, &e.label)?),
            Term::Literal { value, datatype } => {
                if value.is_empty() {
                    return Err(Error::InvalidInput("empty literal object".into()));
                }
                Term::Literal { value, datatype }
            }
        };
        let t = Triple::new(subject, relation, object);
        if self.seen.insert(t.clone()) {
            self.triples.push(t);
        }
        Ok(self)
    }

    /// Parse one fixture line:
    /// `subject_id|subject_label|relation_id|relation_label|object|object_label`.
    ///
    /// An object field that looks like an item id is an entity; anything else
    /// is a literal value.
    pub fn fixture_line(&mut self, line: &str) -> Result<()> {
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::InvalidInput(format!(
                "expected 6 `|`-separated fields, got {}: {line:?}",
                fields.len()
            )));
        }
        let object = if EntityRef::is_item_id(fields[4]) {
            Term::Entity(EntityRef::new(fields[4], fields[5])?)
        } else {
            Term::literal(fields[4])
        };
        self.triple((fields[0], fields[1]), (fields[2], fields[3]), object)?;
        Ok(())
    }

    pub fn build(self) -> MemoryStore {
        // Labels already known from triples win over the empty labels that
        // early references may have carried.
        let entities = self.entities;
        let label_of: HashMap<&str, &str> = entities
            .iter()
            .map(|e| (e.id.as_str(), e.label.as_str()))
            .collect();
        let triples: Vec<Triple> = self
            .triples
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.subject.label = label_of[t.subject.id.as_str()].to_string();
                if let Term::Entity(o) = &mut t.object {
                    o.label = label_of[o.id.as_str()].to_string();
                }
                t.relation.label = self.relation_labels[&t.relation.id].clone();
                t
            })
            .collect();

        let mut by_subject: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_object: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_subject.entry(t.subject.id.clone()).or_default().push(i);
            if let Term::Entity(o) = &t.object {
                by_object.entry(o.id.clone()).or_default().push(i);
            }
        }
        let mut entity_by_label = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            if !e.label.is_empty() {
                entity_by_label.entry(e.label.clone()).or_insert(i);
            }
        }
        MemoryStore {
            triples,
            by_subject,
            by_object,
            entities,
            entity_by_label,
            relation_labels: self.relation_labels,
        }
    }
}

impl MemoryStore {
    pub fn builder() -> MemoryStoreBuilder {
        MemoryStoreBuilder::new()
    }

    /// Parse fixture text. `#` comment lines and blank lines are skipped.
    pub fn from_fixture_str(text: &str) -> Result<Self> {
        let mut b = MemoryStoreBuilder::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            b.fixture_line(line)
                .map_err(|e| Error::InvalidInput(format!("fixture line {}: {e}", n + 1)))?;
        }
        Ok(b.build())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_fixture_str(&text)
    }

    /// Serialize back to the fixture line format.
    pub fn to_fixture_string(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let (obj, obj_label) = match &t.object {
                Term::Entity(e) => (e.id.as_str(), e.label.as_str()),
                Term::Literal { value, .. } => (value.as_str(), ""),
            };
            out.push_str(&format!(
                "{}|{}|{}|{}|{}|{}\n",
                t.subject.id, t.subject.label, t.relation.id, t.relation.label, obj, obj_label
            ));
        }
        out
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &[EntityRef] {
        &self.entities
    }

    pub fn entity(&self, id: &str) -> Option<&EntityRef> {
        self.entities.iter().find(|e| e.id == id)
    }

    fn collect(&self, index: &HashMap<String, Vec<usize>>, id: &str) -> Vec<Triple> {
        index
            .get(id)
            .map(|ix| {
                ix.iter()
                    .take(RELATION_LIMIT)
                    .map(|&i| self.triples[i].clone())
                    .collect()
            })
            .unwrap_or_default()
    }
}

impl KgStore for MemoryStore {
    fn resolve_entity_id(&self, label: &str) -> Result<EntityRef> {
        // Same input contract as the live template.
        escape_label(label)?;
        self.entity_by_label
            .get(label)
            .map(|&i| self.entities[i].clone())
            .ok_or_else(|| Error::NotFound(format!("entity labelled {label:?}")))
    }

    fn get_label(&self, relation: &RelationRef) -> Result<String> {
        if relation.id.is_empty() {
            return Err(Error::InvalidInput("empty relation id".into()));
        }
        match self.relation_labels.get(&relation.id) {
            Some(l) if !l.is_empty() => Ok(l.clone()),
            _ => Err(Error::NotFound(format!("label of {}", relation.id))),
        }
    }

    fn head_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>> {
        Ok(self.collect(&self.by_subject, &entity.id))
    }

    fn tail_relations(&self, entity: &EntityRef) -> Result<Vec<Triple>> {
        Ok(self.collect(&self.by_object, &entity.id))
    }

    fn entity_candidates(&self, _surface: &str) -> Result<Vec<EntityRef>> {
        Ok(self
            .entities
            .iter()
            .filter(|e| !e.label.is_empty())
            .cloned()
            .collect())
    }
}
