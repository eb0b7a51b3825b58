//! JSONL ingestion and snapshot export.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EntityId, GraphConfig, GraphError, ImageRef, KnowledgeGraph, Provenance, Tail};

/// One line of the entities file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

/// One line of the triples file. `provenance` and `active` appear only in
/// snapshots; plain input files omit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<bool>,
}

fn for_each_record<R, T, F>(reader: R, file: &'static str, mut f: F) -> Result<(), GraphError>
where
    R: BufRead,
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<(), GraphError>,
{
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| GraphError::Io { file, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
            file,
            line: lineno,
            message: e.to_string(),
        })?;
        f(lineno, record)?;
    }
    Ok(())
}

impl KnowledgeGraph {
    /// Builds a graph from an entities stream and a triples stream.
    pub fn load<E: BufRead, T: BufRead>(entities: E, triples: T, config: GraphConfig) -> Result<Self, GraphError> {
        let mut graph = KnowledgeGraph::new(config);
        for_each_record(entities, "entities", |line, rec: EntityRecord| {
            graph
                .add_entity(
                    EntityId::new(rec.id),
                    &rec.name,
                    rec.aliases,
                    rec.image.map(ImageRef::new),
                )
                .map_err(|e| match e {
                    GraphError::DuplicateEntity { id, .. } => GraphError::DuplicateEntity { line, id },
                    GraphError::InvalidEntity(message) => GraphError::Malformed {
                        file: "entities",
                        line,
                        message,
                    },
                    other => other,
                })
        })?;
        for_each_record(triples, "triples", |line, rec: TripleRecord| {
            if rec.relation.trim().is_empty() {
                return Err(GraphError::Malformed {
                    file: "triples",
                    line,
                    message: "empty relation".into(),
                });
            }
            let head = EntityId::new(rec.head);
            let pos = graph.position(&head).map_err(|_| GraphError::UndeclaredHead {
                line,
                head: head.as_str().to_string(),
            })?;
            let tail = graph.resolve_tail(&rec.tail);
            graph.push_triple(
                pos,
                rec.relation,
                tail,
                rec.provenance.unwrap_or(Provenance::Base),
                rec.active.unwrap_or(true),
            );
            Ok(())
        })?;
        Ok(graph)
    }

    pub fn load_files(
        entities: &std::path::Path,
        triples: Option<&std::path::Path>,
        config: GraphConfig,
    ) -> Result<Self, GraphError> {
        let open = |path: &std::path::Path, file: &'static str| {
            std::fs::File::open(path)
                .map(std::io::BufReader::new)
                .map_err(|source| GraphError::Io { file, source })
        };
        let ents = open(entities, "entities")?;
        match triples {
            Some(p) => Self::load(ents, open(p, "triples")?, config),
            None => Self::load(ents, std::io::empty(), config),
        }
    }

    /// Writes the entities file of a snapshot. Output is a pure function of
    /// the graph state.
    pub fn write_entities<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entities {
            let rec = EntityRecord {
                id: e.id.as_str().to_string(),
                name: e.canonical_name.clone(),
                aliases: e.aliases.iter().skip(1).cloned().collect(),
                image: e.image.as_ref().map(|i| i.as_str().to_string()),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes the triples file of a snapshot, including provenance and the
    /// active flag of every triple, superseded ones included.
    pub fn write_triples<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.triples {
            let tail = match &t.tail {
                Tail::Entity(id) => id.as_str().to_string(),
                Tail::Literal(s) => s.clone(),
            };
            let rec = TripleRecord {
                head: t.head.as_str().to_string(),
                relation: t.relation.clone(),
                tail,
                provenance: Some(t.provenance),
                active: Some(t.active),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
