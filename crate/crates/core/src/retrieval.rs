//! Cosine scoring, the cross-modal entity index, and snippet ranking.
//!
//! Retrieval is an exhaustive scan. Candidate scores are computed
//! independently and reduced under a strict total order, so the parallel and
//! sequential scans return the same answer.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError};
use crate::graph::{EntityId, ImageRef, KnowledgeGraph, NeighborhoodTriples, TripleId};
use crate::par;

/// Default embedding width.
/// Default bound on concurrent embedder calls during an index build.
pub const DEFAULT_IN_FLIGHT: usize = 8;
pub const DEFAULT_DIMS: usize = 512;

/// Magic bytes opening an embedding cache file.
pub const CACHE_MAGIC: [u8; 4] = *b"DMKE";

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimsMismatch { expected: usize, got: usize },
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("entity index is empty")]
    EmptyIndex,
    #[error("embedding failed for entity `{entity}`: {source}")]
    Embedder {
        entity: EntityId,
        #[source]
        source: GatewayError,
    },
    #[error("embedding failed: {0}")]
    Gateway(#[from] GatewayError),
    #[error("embedding cache: {0}")]
    Cache(String),
    #[error("embedding cache i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::DimsMismatch { expected: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if u.dims() != v.dims() {
        return Err(RetrievalError::DimsMismatch {
            expected: u.dims(),
            got: v.dims(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

fn cosine_with_norms(u: &EmbeddingVector, nu: f64, v: &EmbeddingVector, nv: f64) -> f64 {
    (dot(&u.values, &v.values) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Higher score first, then lower index.
fn ranks_before(a: &(usize, f64), b: &(usize, f64)) -> bool {
    match a.1.partial_cmp(&b.1) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => a.0 < b.0,
        _ => false,
    }
}

/// Indices and scores of the `k` candidates most similar to `query`, best
/// first; ties keep candidate order.
pub fn top_k_by_cosine(
    query: &EmbeddingVector,
    candidates: &[EmbeddingVector],
    k: usize,
) -> Result<Vec<(usize, f64)>, RetrievalError> {
    let qn = query.norm();
    if qn == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    let mut scored = par::try_map(candidates, |c| {
        if c.dims() != query.dims() {
            return Err(RetrievalError::DimsMismatch {
                expected: query.dims(),
                got: c.dims(),
            });
        }
        let cn = c.norm();
        if cn == 0.0 {
            return Err(RetrievalError::ZeroVector);
        }
        Ok(cosine_with_norms(query, qn, c, cn))
    })?
    .into_iter()
    .enumerate()
    .collect::<Vec<_>>();
    scored.sort_by(|a, b| {
        if ranks_before(a, b) {
            Ordering::Less
        } else if ranks_before(b, a) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    });
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusPolicy {
    ImagedOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub entity: EntityId,
    pub image: ImageRef,
    pub vector: EmbeddingVector,
    norm: f64,
}

/// Candidate corpus for visual sub-questions: one joint (name, image)
/// embedding per image-bound entity, sorted by entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityIndex {
    dims: usize,
    entries: Vec<IndexEntry>,
    policy: CorpusPolicy,
}

impl EntityIndex {
    pub fn from_entries(
        dims: usize,
        entries: impl IntoIterator<Item = (EntityId, ImageRef, EmbeddingVector)>,
    ) -> Result<Self, RetrievalError> {
        let mut out = Vec::new();
        for (entity, image, vector) in entries {
            if vector.dims() != dims {
                return Err(RetrievalError::DimsMismatch {
                    expected: dims,
                    got: vector.dims(),
                });
            }
            let norm = vector.norm();
            if norm == 0.0 {
                return Err(RetrievalError::ZeroVector);
            }
            out.push(IndexEntry {
                entity,
                image,
                vector,
                norm,
            });
        }
        out.sort_by(|a, b| a.entity.cmp(&b.entity));
        Ok(Self {
            dims,
            entries: out,
            policy: CorpusPolicy::ImagedOnly,
        })
    }

    /// Embeds every image-bound entity of `graph` from its current name and
    /// image. At most `in_flight` embedder calls run at once.
    pub fn build(graph: &KnowledgeGraph, gateway: &Gateway, in_flight: usize) -> Result<Self, RetrievalError> {
        let imaged: Vec<_> = graph.imaged_entities().collect();
        let vectors = par::with_workers(in_flight, || {
            par::try_map(&imaged, |e| {
                gateway
                    .embed(&e.canonical_name, e.image.as_ref())
                    .map_err(|source| RetrievalError::Embedder {
                        entity: e.id.clone(),
                        source,
                    })
            })
        })?;
        Self::from_entries(
            gateway.dims(),
            imaged
                .iter()
                .zip(vectors)
                .map(|(e, v)| (e.id.clone(), e.image.clone().expect("imaged"), v)),
        )
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn policy(&self) -> CorpusPolicy {
        self.policy
    }

    fn query_norm(&self, query: &EmbeddingVector) -> Result<f64, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.dims() != self.dims {
            return Err(RetrievalError::DimsMismatch {
                expected: self.dims,
                got: query.dims(),
            });
        }
        let n = query.norm();
        if n == 0.0 {
            return Err(RetrievalError::ZeroVector);
        }
        Ok(n)
    }

    /// Entity whose joint embedding is most cosine-similar to `query`; ties go
    /// to the lowest entity id.
    pub fn top1(&self, query: &EmbeddingVector) -> Result<(EntityId, f64), RetrievalError> {
        let qn = self.query_norm(query)?;
        let (idx, score) = par::argmax_by(
            &self.entries,
            |_, e| cosine_with_norms(query, qn, &e.vector, e.norm),
            ranks_before,
        )
        .ok_or(RetrievalError::EmptyIndex)?;
        Ok((self.entries[idx].entity.clone(), score))
    }

    /// Single-threaded [`top1`](Self::top1), kept for benchmarking.
    pub fn top1_sequential(&self, query: &EmbeddingVector) -> Result<(EntityId, f64), RetrievalError> {
        let qn = self.query_norm(query)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let cand = (i, cosine_with_norms(query, qn, &e.vector, e.norm));
            if best.is_none_or(|b| ranks_before(&cand, &b)) {
                best = Some(cand);
            }
        }
        let (idx, score) = best.ok_or(RetrievalError::EmptyIndex)?;
        Ok((self.entries[idx].entity.clone(), score))
    }

    /// Number of image bindings whose (entity, vector) differ between two
    /// indexes, counting additions and removals.
    pub fn changed_bindings(&self, other: &EntityIndex) -> usize {
        use std::collections::BTreeMap;
        let key = |idx: &EntityIndex| {
            idx.entries
                .iter()
                .map(|e| (e.image.clone(), (e.entity.clone(), e.vector.values.clone())))
                .collect::<BTreeMap<_, _>>()
        };
        let (a, b) = (key(self), key(other));
        let mut changed = a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).count();
        changed += b.keys().filter(|k| !a.contains_key(*k)).count();
        changed
    }

    /// Serializes the index as an embedding cache: `DMKE`, dims and count as
    /// little-endian u32, then per entry a u32 id length, the id bytes and
    /// `dims` little-endian f32 values.
    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<(), RetrievalError> {
        out.write_all(&CACHE_MAGIC)?;
        out.write_all(&(self.dims as u32).to_le_bytes())?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let id = e.entity.as_str().as_bytes();
            out.write_all(&(id.len() as u32).to_le_bytes())?;
            out.write_all(id)?;
            for v in &e.vector.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Rebuilds an index from a cache file. The cache must cover exactly the
    /// image-bound entities of `graph`.
    pub fn read_cache<R: Read>(mut input: R, graph: &KnowledgeGraph) -> Result<Self, RetrievalError> {
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if word != CACHE_MAGIC {
            return Err(RetrievalError::Cache("bad magic".into()));
        }
        let mut read_u32 = |input: &mut R| -> Result<u32, RetrievalError> {
            input.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let dims = read_u32(&mut input)? as usize;
        let count = read_u32(&mut input)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut input)? as usize;
            let mut id = vec![0u8; len];
            input.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| RetrievalError::Cache("id is not UTF-8".into()))?;
            let mut raw = vec![0u8; dims * 4];
            input.read_exact(&mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let entity = EntityId::new(id);
            let image = graph
                .entity(&entity)
                .and_then(|e| e.image.clone())
                .ok_or_else(|| RetrievalError::Cache(format!("`{entity}` is not an image-bound entity")))?;
            entries.push((entity, image, EmbeddingVector::new(values)?));
        }
        let index = Self::from_entries(dims, entries)?;
        let expected = graph.imaged_entities().count();
        if index.len() != expected {
            return Err(RetrievalError::Cache(format!(
                "cache covers {} entities, graph has {expected} image-bound entities",
                index.len()
            )));
        }
        Ok(index)
    }
}

/// One retrieved fact, rendered as `(head, relation, tail)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub text: String,
    #[serde(skip)]
    pub head: String,
    #[serde(skip)]
    pub relation: String,
    #[serde(skip)]
    pub tail: String,
    pub triple: TripleId,
    pub score: f64,
}

pub fn render_triple(head: &str, relation: &str, tail: &str) -> String {
    format!("({head}, {relation}, {tail})")
}

/// Ranks the candidate triples against the question with text-only
/// embeddings and keeps the best `k`, highest score first.
pub fn topk_snippets(
    graph: &KnowledgeGraph,
    question: &str,
    candidates: &NeighborhoodTriples,
    k: usize,
    gateway: &Gateway,
) -> Result<Vec<Snippet>, RetrievalError> {
    if candidates.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let head = graph.display_name(&candidates.entity).to_string();
    let rendered: Vec<(String, String, String, TripleId)> = candidates
        .items
        .iter()
        .map(|item| {
            let tail = graph.tail_text(&item.tail).to_string();
            (
                render_triple(&head, &item.relation, &tail),
                item.relation.clone(),
                tail,
                item.triple,
            )
        })
        .collect();
    let query = gateway.embed(question, None)?;
    let vectors = par::try_map(&rendered, |(text, ..)| gateway.embed(text, None))?;
    let ranked = top_k_by_cosine(&query, &vectors, k)?;
    Ok(ranked
        .into_iter()
        .map(|(i, score)| {
            let (text, relation, tail, triple) = rendered[i].clone();
            Snippet {
                text,
                head: head.clone(),
                relation,
                tail,
                triple,
                score,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, dims: usize) -> EmbeddingVector {
        v(&(0..dims).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>())
    }

    /// Scalar-loop reference, independent of `dot`.
    fn reference_cosine(u: &[f32], w: &[f32]) -> f64 {
        let mut uw = 0.0f64;
        let mut uu = 0.0f64;
        let mut ww = 0.0f64;
        for i in 0..u.len() {
            uw += u[i] as f64 * w[i] as f64;
            uu += u[i] as f64 * u[i] as f64;
            ww += w[i] as f64 * w[i] as f64;
        }
        uw / (uu.sqrt() * ww.sqrt())
    }

    #[test]
    fn cosine_basics() {
        let u = v(&[1.0, 2.0, 3.0]);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(cosine(&v(&[0.0, 0.0]), &u), Err(RetrievalError::DimsMismatch { .. })));
        assert!(matches!(cosine(&v(&[0.0, 0.0, 0.0]), &u), Err(RetrievalError::ZeroVector)));
        assert!(matches!(
            EmbeddingVector::new(vec![f32::NAN]),
            Err(RetrievalError::NonFinite)
        ));
    }

    #[test]
    fn cosine_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (a, b) = (random_vec(&mut rng, 512), random_vec(&mut rng, 512));
            let got = cosine(&a, &b).unwrap();
            assert!((got - reference_cosine(a.values(), b.values())).abs() < 1e-6);
            assert_eq!(got, cosine(&b, &a).unwrap());
        }
    }

    #[test]
    fn top1_tie_breaks_on_lowest_id() {
        let idx = EntityIndex::from_entries(
            2,
            vec![
                (EntityId::new("b"), ImageRef::new("i2"), v(&[1.0, 0.0])),
                (EntityId::new("a"), ImageRef::new("i1"), v(&[2.0, 0.0])),
                (EntityId::new("c"), ImageRef::new("i3"), v(&[0.0, 1.0])),
            ],
        )
        .unwrap();
        let (id, score) = idx.top1(&v(&[3.0, 0.0])).unwrap();
        assert_eq!((id.as_str(), score), ("a", 1.0));
        assert_eq!(idx.top1_sequential(&v(&[3.0, 0.0])).unwrap().0.as_str(), "a");
        let (id, _) = idx.top1(&v(&[0.1, 1.0])).unwrap();
        assert_eq!(id.as_str(), "c");
    }

    #[test]
    fn empty_index_and_bad_query() {
        let idx = EntityIndex::from_entries(2, Vec::new()).unwrap();
        assert!(matches!(idx.top1(&v(&[1.0, 0.0])), Err(RetrievalError::EmptyIndex)));
        let idx = EntityIndex::from_entries(2, vec![(EntityId::new("a"), ImageRef::new("i"), v(&[1.0, 0.0]))]).unwrap();
        assert!(matches!(idx.top1(&v(&[1.0, 0.0, 0.0])), Err(RetrievalError::DimsMismatch { .. })));
        assert!(matches!(idx.top1(&v(&[0.0, 0.0])), Err(RetrievalError::ZeroVector)));
    }

    #[test]
    fn top_k_orders_and_truncates() {
        let q = v(&[1.0, 0.0]);
        let cands = vec![v(&[0.0, 1.0]), v(&[1.0, 1.0]), v(&[1.0, 0.0]), v(&[2.0, 2.0])];
        let got = top_k_by_cosine(&q, &cands, 3).unwrap();
        let order: Vec<usize> = got.iter().map(|g| g.0).collect();
        assert_eq!(order, [2, 1, 3]);
        assert_eq!(top_k_by_cosine(&q, &cands[..2], 5).unwrap().len(), 2);
    }

    #[test]
    fn cache_round_trip() {
        use crate::graph::GraphConfig;
        let mut g = KnowledgeGraph::new(GraphConfig::default());
        g.add_entity(EntityId::new("a"), "A", vec![], Some(ImageRef::new("ia"))).unwrap();
        g.add_entity(EntityId::new("b"), "B", vec![], Some(ImageRef::new("ib"))).unwrap();
        g.add_entity(EntityId::new("c"), "C", vec![], None).unwrap();
        let idx = EntityIndex::from_entries(
            3,
            vec![
                (EntityId::new("b"), ImageRef::new("ib"), v(&[0.5, -1.0, 2.0])),
                (EntityId::new("a"), ImageRef::new("ia"), v(&[1.0, 0.0, 0.25])),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        idx.write_cache(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"DMKE");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 12 + 2 * (4 + 1 + 12));
        let back = EntityIndex::read_cache(&buf[..], &g).unwrap();
        assert_eq!(back, idx);
        buf[0] = b'X';
        assert!(matches!(EntityIndex::read_cache(&buf[..], &g), Err(RetrievalError::Cache(_))));
    }
}
