//! Dynamic multimodal knowledge graph.
//!
//! Entities carry an alias set and an optional image binding. Triples carry
//! provenance (`base` or `edited`) and an `active` flag: an edit never deletes
//! the fact it supersedes, it deactivates it. Every answer-selection path
//! reads active triples only; superseded ones are reachable through
//! [`KnowledgeGraph::neighborhood`] with `include_superseded = true`.
//!
//! Edits happen in a single-writer phase (`&mut self`). Once wrapped in an
//! `Arc` the graph is read-only and can be shared across worker threads.

mod edit;
mod io;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::normalize::Normalizer;

pub use edit::{EditQuadruple, EditReceipt, ImageRebind, SubjectResolution};
pub use io::{EntityRecord, TripleRecord};

/// Relation whose edits rename the entity an image depicts.
pub const DEFAULT_NAME_RELATION: &str = "name";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque image handle. The engine never decodes images; backends do.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(String);

impl ImageRef {
    pub fn new(handle: impl Into<String>) -> Self {
        Self(handle.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub canonical_name: String,
    /// Always contains `canonical_name`, first. Distinct after normalization.
    pub aliases: Vec<String>,
    pub image: Option<ImageRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tail {
    Entity(EntityId),
    Literal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    // Declaration order is the neighborhood sort order: edited facts first.
    Edited,
    Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripleId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub id: TripleId,
    pub head: EntityId,
    pub relation: String,
    pub tail: Tail,
    pub provenance: Provenance,
    pub active: bool,
}

/// Result of resolving a surface form against the alias tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linked {
    pub id: EntityId,
    /// The surface belonged to more than one alias set.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodItem {
    pub triple: TripleId,
    pub relation: String,
    pub tail: Tail,
    pub provenance: Provenance,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodTriples {
    pub entity: EntityId,
    pub items: Vec<NeighborhoodItem>,
}

impl NeighborhoodTriples {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub name_relation: String,
    pub normalizer: Normalizer,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            name_relation: DEFAULT_NAME_RELATION.to_string(),
            normalizer: Normalizer::DEFAULT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub entities: usize,
    pub imaged_entities: usize,
    pub triples: usize,
    pub active_triples: usize,
    pub edited_triples: usize,
    pub superseded_triples: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("{file} line {line}: malformed record: {message}")]
    Malformed {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("entities line {line}: duplicate entity id `{id}`")]
    DuplicateEntity { line: usize, id: String },
    #[error("triples line {line}: head `{head}` is not a declared entity")]
    UndeclaredHead { line: usize, head: String },
    #[error("i/o error reading {file}: {source}")]
    Io {
        file: &'static str,
        #[source]
        source: std::io::Error,
    },
    #[error("edit subject `{subject}` (image {image:?}) does not resolve to any entity")]
    UnresolvableSubject {
        subject: String,
        image: Option<String>,
    },
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("empty surface form")]
    EmptySurface,
}

#[derive(Debug, Clone, Copy)]
struct AliasHit {
    canonical: bool,
    pos: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    config: GraphConfig,
    entities: Vec<Entity>,
    by_id: HashMap<EntityId, usize>,
    /// normalized alias -> hits, canonical-name hits first, then by entity id
    alias_index: HashMap<String, Vec<AliasHit>>,
    image_index: HashMap<ImageRef, usize>,
    triples: Vec<Triple>,
    /// entity position -> triple ids with that head
    by_head: Vec<Vec<TripleId>>,
}

impl KnowledgeGraph {
    pub fn new(config: GraphConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn normalizer(&self) -> Normalizer {
        self.config.normalizer
    }

    /// Declares an entity. The canonical name is folded into the alias set
    /// and aliases that collide after normalization are dropped.
    pub fn add_entity(
        &mut self,
        id: EntityId,
        canonical_name: &str,
        aliases: impl IntoIterator<Item = String>,
        image: Option<ImageRef>,
    ) -> Result<(), GraphError> {
        if id.as_str().is_empty() {
            return Err(GraphError::InvalidEntity("empty entity id".into()));
        }
        if self.config.normalizer.normalize(canonical_name).is_empty() {
            return Err(GraphError::InvalidEntity(format!("entity `{id}` has an empty name")));
        }
        if self.by_id.contains_key(&id) {
            return Err(GraphError::DuplicateEntity {
                line: 0,
                id: id.0,
            });
        }
        let norm = self.config.normalizer;
        let mut seen = Vec::new();
        let mut kept = Vec::new();
        for alias in std::iter::once(canonical_name.to_string()).chain(aliases) {
            let key = norm.normalize(&alias);
            if key.is_empty() || seen.contains(&key) {
                continue;
            }
            seen.push(key);
            kept.push(alias);
        }
        let pos = self.entities.len();
        if let Some(img) = &image {
            // Last declaration wins if two entities claim the same image.
            if let Some(prev) = self.image_index.insert(img.clone(), pos) {
                self.entities[prev].image = None;
            }
        }
        self.by_id.insert(id.clone(), pos);
        self.entities.push(Entity {
            id,
            canonical_name: canonical_name.to_string(),
            aliases: kept,
            image,
        });
        for (rank, key) in seen.into_iter().enumerate() {
            let slot = self.alias_index.entry(key).or_default();
            slot.push(AliasHit {
                canonical: rank == 0,
                pos,
            });
            let entities = &self.entities;
            slot.sort_by(|a, b| {
                (!a.canonical, &entities[a.pos].id).cmp(&(!b.canonical, &entities[b.pos].id))
            });
        }
        self.by_head.push(Vec::new());
        Ok(())
    }

    pub(crate) fn push_triple(
        &mut self,
        head_pos: usize,
        relation: String,
        tail: Tail,
        provenance: Provenance,
        active: bool,
    ) -> TripleId {
        let id = TripleId(self.triples.len());
        self.triples.push(Triple {
            id,
            head: self.entities[head_pos].id.clone(),
            relation,
            tail,
            provenance,
            active,
        });
        self.by_head[head_pos].push(id);
        id
    }

    /// Adds an active base triple. The tail string is resolved as an entity
    /// id, then as an alias; otherwise it is stored as a literal.
    pub fn add_triple(&mut self, head: &EntityId, relation: &str, tail: &str) -> Result<TripleId, GraphError> {
        let pos = self.position(head)?;
        let tail = self.resolve_tail(tail);
        Ok(self.push_triple(pos, relation.to_string(), tail, Provenance::Base, true))
    }

    pub(crate) fn resolve_tail(&self, raw: &str) -> Tail {
        let id = EntityId::new(raw);
        if self.by_id.contains_key(&id) {
            return Tail::Entity(id);
        }
        match self.link_entity(raw) {
            Ok(Some(linked)) => Tail::Entity(linked.id),
            _ => Tail::Literal(raw.to_string()),
        }
    }

    pub(crate) fn position(&self, id: &EntityId) -> Result<usize, GraphError> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownEntity(id.clone()))
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.by_id.get(id).map(|&p| &self.entities[p])
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, id: TripleId) -> Option<&Triple> {
        self.triples.get(id.0)
    }

    /// Entity currently depicted by an image handle.
    pub fn entity_for_image(&self, image: &ImageRef) -> Option<&Entity> {
        self.image_index.get(image).map(|&p| &self.entities[p])
    }

    /// Entities with an image binding, in declaration order.
    pub fn imaged_entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(|e| e.image.is_some())
    }

    /// Distinct relation labels, sorted.
    pub fn relation_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.triples.iter().map(|t| t.relation.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Human-readable tail: canonical name for entity tails, verbatim text
    /// for literals.
    pub fn tail_text<'a>(&'a self, tail: &'a Tail) -> &'a str {
        match tail {
            Tail::Entity(id) => self
                .entity(id)
                .map(|e| e.canonical_name.as_str())
                .unwrap_or(id.as_str()),
            Tail::Literal(s) => s,
        }
    }

    pub fn display_name<'a>(&'a self, id: &'a EntityId) -> &'a str {
        self.entity(id).map(|e| e.canonical_name.as_str()).unwrap_or(id.as_str())
    }

    /// Maps a surface form to the entity whose alias set contains it after
    /// normalization. When several alias sets contain it, an entity whose
    /// canonical name matches beats one that only lists it as an alias, then
    /// the lowest id wins; either way the result is flagged ambiguous.
    pub fn link_entity(&self, surface: &str) -> Result<Option<Linked>, GraphError> {
        let key = self.config.normalizer.normalize(surface);
        if key.is_empty() {
            return Err(GraphError::EmptySurface);
        }
        Ok(self.alias_index.get(&key).and_then(|hits| {
            hits.first().map(|hit| Linked {
                id: self.entities[hit.pos].id.clone(),
                ambiguous: hits.len() > 1,
            })
        }))
    }

    /// Triples headed by `entity`, edited ones first, then by relation label.
    pub fn neighborhood(&self, entity: &EntityId, include_superseded: bool) -> Result<NeighborhoodTriples, GraphError> {
        let pos = self.position(entity)?;
        let mut items: Vec<NeighborhoodItem> = self.by_head[pos]
            .iter()
            .map(|&tid| &self.triples[tid.0])
            .filter(|t| include_superseded || t.active)
            .map(|t| NeighborhoodItem {
                triple: t.id,
                relation: t.relation.clone(),
                tail: t.tail.clone(),
                provenance: t.provenance,
                active: t.active,
            })
            .collect();
        items.sort_by(|a, b| {
            (a.provenance, &a.relation, a.triple).cmp(&(b.provenance, &b.relation, b.triple))
        });
        Ok(NeighborhoodTriples {
            entity: entity.clone(),
            items,
        })
    }

    /// Inactive (superseded) triples headed by `entity`.
    pub fn superseded(&self, entity: &EntityId) -> Result<Vec<&Triple>, GraphError> {
        let pos = self.position(entity)?;
        Ok(self.by_head[pos]
            .iter()
            .map(|&tid| &self.triples[tid.0])
            .filter(|t| !t.active)
            .collect())
    }

    pub fn stats(&self) -> GraphStats {
        let active = self.triples.iter().filter(|t| t.active).count();
        GraphStats {
            entities: self.entities.len(),
            imaged_entities: self.image_index.len(),
            triples: self.triples.len(),
            active_triples: active,
            edited_triples: self
                .triples
                .iter()
                .filter(|t| t.provenance == Provenance::Edited)
                .count(),
            superseded_triples: self.triples.len() - active,
        }
    }
}
