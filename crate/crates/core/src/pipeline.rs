//! Solving one multihop instance: decompose, dispatch each sub-question in
//! order, and record a trace.
//!
//! Visual sub-questions go to the cross-modal entity index; reasoning
//! sub-questions go to the hybrid reasoner after `[ENT]` is replaced by the
//! previous hop's answer. The first hop that cannot be answered ends the
//! instance as `unresolved@k`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::eval::MultihopInstance;
use crate::gateway::{Gateway, GatewayError, SubQuestion, SubQuestionKind, ENT_TOKEN};
use crate::graph::{EntityId, ImageRef, KnowledgeGraph};
use crate::par;
use crate::reasoner::{answer_reasoning_hop, HopDiagnostics, ReasonerConfig, ReasonerError};
use crate::retrieval::{EntityIndex, RetrievalError};

pub const TRACE_VERSION: u32 = 1;

/// Which of an instance's images a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageUsed {
    Original,
    Rephrased,
}

impl ImageUsed {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageUsed::Original => "original",
            ImageUsed::Rephrased => "rephrased",
        }
    }

    /// The image and the mode actually used. Rephrased falls back to the
    /// original when the instance has no rephrased image.
    pub fn select(self, inst: &MultihopInstance) -> (&ImageRef, ImageUsed) {
        match (self, &inst.image_rephrased) {
            (ImageUsed::Rephrased, Some(v)) => (v, ImageUsed::Rephrased),
            _ => (&inst.image, ImageUsed::Original),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    Completed,
    /// 1-based hop that could not be answered.
    Unresolved(usize),
    Error,
}

impl std::fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceStatus::Completed => f.write_str("completed"),
            TraceStatus::Unresolved(k) => write!(f, "unresolved@{k}"),
            TraceStatus::Error => f.write_str("error"),
        }
    }
}

impl std::str::FromStr for TraceStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "completed" => Ok(TraceStatus::Completed),
            "error" => Ok(TraceStatus::Error),
            _ => s
                .strip_prefix("unresolved@")
                .and_then(|k| k.parse().ok())
                .map(TraceStatus::Unresolved)
                .ok_or_else(|| format!("unknown trace status `{s}`")),
        }
    }
}

impl Serialize for TraceStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TraceStatus {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One attempted hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub index: usize,
    /// Sub-question as decomposed, placeholders intact.
    pub sub_question: String,
    /// Sub-question after `[ENT]` substitution.
    pub question: String,
    pub kind: SubQuestionKind,
    /// `None` when the hop was not answered.
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved_entity: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<HopDiagnostics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub trace_version: u32,
    pub instance: String,
    /// Mode requested for this record.
    pub image_mode: ImageUsed,
    /// Mode actually used (differs when no rephrased image exists).
    pub image_used: ImageUsed,
    pub image: ImageRef,
    pub question: String,
    pub status: TraceStatus,
    pub final_answer: Option<String>,
    /// Full decomposition; `hops` stops early on an unresolved hop.
    pub sub_questions: Vec<String>,
    pub hops: Vec<HopTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set when the failure was the backend being unreachable.
    #[serde(skip)]
    pub backend_unreachable: bool,
}

/// Replaces every `[ENT]` with `previous` verbatim. `None` when the
/// placeholder is present but there is no previous answer.
pub fn substitute_ent(sub_question: &SubQuestion, previous: Option<&str>) -> Option<String> {
    if !sub_question.has_ent() {
        return Some(sub_question.text.clone());
    }
    let previous = previous.filter(|p| !p.trim().is_empty())?;
    Some(sub_question.text.replace(ENT_TOKEN, previous))
}

/// Kind of a sub-question plus a flag when it carries both placeholders.
pub fn classify_subq(sub_question: &SubQuestion) -> (SubQuestionKind, Option<&'static str>) {
    let flag = (sub_question.has_image() && sub_question.has_ent()).then_some("mixed-placeholders");
    (sub_question.kind, flag)
}

fn visual_hop(
    gateway: &Gateway,
    index: &EntityIndex,
    graph: &KnowledgeGraph,
    question: &str,
    image: &ImageRef,
) -> Result<(EntityId, f64, String), HopFailure> {
    let query = gateway.embed(question, Some(image)).map_err(HopFailure::Gateway)?;
    let (entity, score) = index.top1(&query).map_err(HopFailure::Retrieval)?;
    let name = graph.display_name(&entity).to_string();
    Ok((entity, score, name))
}

enum HopFailure {
    Gateway(GatewayError),
    Retrieval(RetrievalError),
}

impl HopFailure {
    fn unreachable(&self) -> bool {
        match self {
            HopFailure::Gateway(e) => e.is_unreachable(),
            HopFailure::Retrieval(RetrievalError::Gateway(e)) => e.is_unreachable(),
            HopFailure::Retrieval(_) => false,
        }
    }

    fn message(&self) -> String {
        match self {
            HopFailure::Gateway(e) => e.to_string(),
            HopFailure::Retrieval(e) => e.to_string(),
        }
    }
}

/// Solves one instance. Deterministic for a deterministic backend.
pub fn solve(
    instance: &MultihopInstance,
    graph: &KnowledgeGraph,
    cfg: &ReasonerConfig,
    gateway: &Gateway,
    index: &EntityIndex,
    mode: ImageUsed,
) -> ReasoningTrace {
    let (image, image_used) = mode.select(instance);
    let mut trace = ReasoningTrace {
        trace_version: TRACE_VERSION,
        instance: instance.id.clone(),
        image_mode: mode,
        image_used,
        image: image.clone(),
        question: instance.question.clone(),
        status: TraceStatus::Error,
        final_answer: None,
        sub_questions: Vec::new(),
        hops: Vec::new(),
        error: None,
        backend_unreachable: false,
    };
    let subqs = match gateway.decompose(&instance.question) {
        Ok(s) => s,
        Err(e) => {
            trace.backend_unreachable = e.is_unreachable();
            trace.error = Some(format!("decomposition failed: {e}"));
            return trace;
        }
    };
    trace.sub_questions = subqs.iter().map(|s| s.text.clone()).collect();

    let mut previous: Option<String> = None;
    for subq in &subqs {
        let (kind, flag) = classify_subq(subq);
        let mut hop = HopTrace {
            index: subq.index,
            sub_question: subq.text.clone(),
            question: subq.text.clone(),
            kind,
            answer: None,
            retrieved_entity: None,
            retrieval_score: None,
            diagnostics: None,
            flags: flag.into_iter().map(str::to_string).collect(),
        };
        let Some(question) = substitute_ent(subq, previous.as_deref()) else {
            hop.flags.push("missing-previous-answer".into());
            trace.hops.push(hop);
            trace.status = TraceStatus::Unresolved(subq.index);
            return trace;
        };
        hop.question = question;
        match kind {
            SubQuestionKind::Visual => match visual_hop(gateway, index, graph, &hop.question, image) {
                Ok((entity, score, name)) => {
                    hop.retrieved_entity = Some(entity);
                    hop.retrieval_score = Some(score);
                    hop.answer = Some(name);
                }
                Err(f) => {
                    trace.backend_unreachable = f.unreachable();
                    hop.flags.push(format!("retrieval-failed: {}", f.message()));
                }
            },
            SubQuestionKind::Reasoning => {
                match answer_reasoning_hop(graph, previous.as_deref(), &hop.question, Some(image), cfg, gateway) {
                    Ok((answer, diag)) => {
                        hop.answer = Some(answer);
                        hop.diagnostics = Some(diag);
                    }
                    Err(ReasonerError::Unresolved(diag)) => {
                        trace.backend_unreachable = diag.flags.iter().any(|f| f.contains("unreachable") || f.contains("timed out"));
                        hop.diagnostics = Some(*diag);
                    }
                    Err(e @ ReasonerError::InvalidConfig(_)) => {
                        trace.error = Some(e.to_string());
                        trace.hops.push(hop);
                        return trace;
                    }
                }
            }
        }
        let answered = hop.answer.clone();
        trace.hops.push(hop);
        match answered {
            Some(a) => previous = Some(a),
            None => {
                trace.status = TraceStatus::Unresolved(subq.index);
                return trace;
            }
        }
    }
    trace.final_answer = previous;
    trace.status = TraceStatus::Completed;
    trace
}

/// Solves every instance under every requested mode on a pool of `workers`
/// threads (0 = default pool). Output order is instance-major, then mode,
/// independent of scheduling.
pub fn solve_all(
    instances: &[MultihopInstance],
    graph: &KnowledgeGraph,
    cfg: &ReasonerConfig,
    gateway: &Gateway,
    index: &EntityIndex,
    modes: &[ImageUsed],
    workers: usize,
) -> Vec<ReasoningTrace> {
    let jobs: Vec<(&MultihopInstance, ImageUsed)> =
        instances.iter().flat_map(|i| modes.iter().map(move |m| (i, *m))).collect();
    par::with_workers(workers, || {
        par::map(&jobs, |(inst, mode)| solve(inst, graph, cfg, gateway, index, *mode))
    })
}

pub fn write_traces<W: std::io::Write>(traces: &[ReasoningTrace], mut out: W) -> std::io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_traces<R: std::io::BufRead>(reader: R) -> Result<Vec<ReasoningTrace>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| (i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: ReasoningTrace = serde_json::from_str(&line).map_err(|e| (i + 1, e.to_string()))?;
        if t.trace_version != TRACE_VERSION {
            return Err((i + 1, format!("unsupported trace_version {}", t.trace_version)));
        }
        out.push(t);
    }
    Ok(out)
}
