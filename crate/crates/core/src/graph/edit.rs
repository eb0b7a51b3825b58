//! Fact edits `(subject, image, relation, old -> new)` and their application.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{EntityId, GraphError, ImageRef, KnowledgeGraph, Provenance, Tail, TripleId};

/// A single fact edit. `subject` is the textual locator, `image` the visual
/// one; the image binding wins when both resolve.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditQuadruple {
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
    pub relation: String,
    pub old: String,
    pub new: String,
}

impl EditQuadruple {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.relation.trim().is_empty() {
            return Err(GraphError::InvalidEdit("empty relation".into()));
        }
        if self.new.trim().is_empty() {
            return Err(GraphError::InvalidEdit("empty new object".into()));
        }
        if crate::normalize::normalize(&self.new) == crate::normalize::normalize(&self.old) {
            return Err(GraphError::InvalidEdit(format!(
                "new object `{}` equals old object",
                self.new
            )));
        }
        if self.subject.trim().is_empty() && self.image.is_none() {
            return Err(GraphError::InvalidEdit("no subject locator".into()));
        }
        Ok(())
    }

    /// Reads an edits file, one JSON object per line.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<EditQuadruple>, GraphError> {
        let mut edits = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| GraphError::Io { file: "edits", source })?;
            if line.trim().is_empty() {
                continue;
            }
            let edit: EditQuadruple = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
                file: "edits",
                line: idx + 1,
                message: e.to_string(),
            })?;
            edit.validate().map_err(|e| GraphError::Malformed {
                file: "edits",
                line: idx + 1,
                message: e.to_string(),
            })?;
            edits.push(edit);
        }
        Ok(edits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectResolution {
    Image,
    Alias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageRebind {
    pub image: ImageRef,
    pub from: EntityId,
    pub to: EntityId,
    /// Image previously bound to `to`, now unbound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displaced: Option<ImageRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EditReceipt {
    pub subject: EntityId,
    pub resolved_by: SubjectResolution,
    pub ambiguous_subject: bool,
    pub added: TripleId,
    pub deactivated: Vec<TripleId>,
    /// Earlier edited triple on the same (subject, relation) that this edit
    /// replaced.
    pub overridden: Option<TripleId>,
    pub rebound: Option<ImageRebind>,
    pub created_entity: Option<EntityId>,
}

impl KnowledgeGraph {
    fn tail_matches(&self, tail: &Tail, old_key: &str) -> bool {
        let norm = self.config.normalizer;
        match tail {
            Tail::Literal(s) => norm.normalize(s) == old_key,
            Tail::Entity(id) => self
                .entity(id)
                .map(|e| e.aliases.iter().any(|a| norm.normalize(a) == old_key))
                .unwrap_or(false),
        }
    }

    fn fresh_entity_id(&self, name: &str) -> EntityId {
        let base = format!("edit:{}", name.trim());
        let mut candidate = EntityId::new(base.clone());
        let mut n = 2;
        while self.by_id.contains_key(&candidate) {
            candidate = EntityId::new(format!("{base}#{n}"));
            n += 1;
        }
        candidate
    }

    /// Integrates an edit. Adds exactly one active edited triple, deactivates
    /// (but keeps) the base triple it supersedes and any earlier edit on the
    /// same (subject, relation). Edits on the name relation also move the
    /// image binding to the entity named by the new object, creating that
    /// entity if needed.
    pub fn apply_edit(&mut self, edit: &EditQuadruple) -> Result<EditReceipt, GraphError> {
        edit.validate()?;
        let norm = self.config.normalizer;

        let by_image = edit
            .image
            .as_ref()
            .and_then(|img| self.image_index.get(img).copied());
        let (subject_pos, resolved_by, ambiguous_subject) = match by_image {
            Some(pos) => (pos, SubjectResolution::Image, false),
            None => {
                let linked = if edit.subject.trim().is_empty() {
                    None
                } else {
                    self.link_entity(&edit.subject)?
                };
                match linked {
                    Some(l) => (self.by_id[&l.id], SubjectResolution::Alias, l.ambiguous),
                    None => {
                        return Err(GraphError::UnresolvableSubject {
                            subject: edit.subject.clone(),
                            image: edit.image.as_ref().map(|i| i.as_str().to_string()),
                        })
                    }
                }
            }
        };

        let rel_key = norm.normalize(&edit.relation);
        let old_key = norm.normalize(&edit.old);
        let mut overridden = None;
        let mut deactivated = Vec::new();
        for &tid in &self.by_head[subject_pos] {
            let t = &self.triples[tid.0];
            if !t.active || norm.normalize(&t.relation) != rel_key {
                continue;
            }
            match t.provenance {
                Provenance::Edited => {
                    overridden = Some(tid);
                    deactivated.push(tid);
                }
                Provenance::Base if self.tail_matches(&t.tail, &old_key) => deactivated.push(tid),
                Provenance::Base => {}
            }
        }
        for tid in &deactivated {
            self.triples[tid.0].active = false;
        }

        let is_name_edit = rel_key == norm.normalize(&self.config.name_relation);
        let mut created_entity = None;
        let mut rebound = None;
        let tail = if is_name_edit {
            let target_pos = match self.link_entity(&edit.new)? {
                Some(l) => self.by_id[&l.id],
                None => {
                    let id = self.fresh_entity_id(&edit.new);
                    self.add_entity(id.clone(), edit.new.trim(), std::iter::empty(), None)?;
                    created_entity = Some(id);
                    self.entities.len() - 1
                }
            };
            let image = match &edit.image {
                Some(img) if self.image_index.get(img) == Some(&subject_pos) => Some(img.clone()),
                _ => self.entities[subject_pos].image.clone(),
            };
            if let Some(image) = image {
                if target_pos != subject_pos {
                    if self.entities[subject_pos].image.as_ref() == Some(&image) {
                        self.entities[subject_pos].image = None;
                    }
                    let displaced = self.entities[target_pos]
                        .image
                        .replace(image.clone())
                        .filter(|prev| *prev != image);
                    if let Some(prev) = &displaced {
                        self.image_index.remove(prev);
                    }
                    self.image_index.insert(image.clone(), target_pos);
                    rebound = Some(ImageRebind {
                        image,
                        from: self.entities[subject_pos].id.clone(),
                        to: self.entities[target_pos].id.clone(),
                        displaced,
                    });
                }
            }
            Tail::Entity(self.entities[target_pos].id.clone())
        } else {
            match self.link_entity(&edit.new)? {
                Some(l) => Tail::Entity(l.id),
                None => Tail::Literal(edit.new.clone()),
            }
        };

        let added = self.push_triple(subject_pos, edit.relation.clone(), tail, Provenance::Edited, true);
        Ok(EditReceipt {
            subject: self.entities[subject_pos].id.clone(),
            resolved_by,
            ambiguous_subject,
            added,
            deactivated,
            overridden,
            rebound,
            created_entity,
        })
    }

    pub fn apply_edits<'a>(
        &mut self,
        edits: impl IntoIterator<Item = &'a EditQuadruple>,
    ) -> Result<Vec<EditReceipt>, GraphError> {
        edits.into_iter().map(|e| self.apply_edit(e)).collect()
    }
}
