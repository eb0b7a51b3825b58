//! Answering a reasoning sub-question over the graph.
//!
//! Two independent paths propose candidates:
//!
//! - relation linking: extract a relation keyword from the question, embed it
//!   and every relation around the subject, and take the tail of the best
//!   match if its cosine clears `alpha`;
//! - retrieval-augmented answering: rank the subject's facts against the
//!   question, keep the top `k`, and let the answer model respond.
//!
//! When both propose different answers, each candidate's own neighborhood is
//! gathered as background and the choice model picks one of them.
//!
//! Gateway failures never abort a hop; they empty the affected path and leave
//! a flag in the diagnostics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{CandidateContext, Gateway};
use crate::graph::{EntityId, ImageRef, KnowledgeGraph, NeighborhoodTriples};
use crate::normalize::normalize;
use crate::par;
use crate::retrieval::{cosine, render_triple, topk_snippets, EmbeddingVector, Snippet};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_K: usize = 5;

/// Which candidate wins when the decision step is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackOrder {
    PreferLink,
    PreferModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    /// Minimum keyword/relation cosine for the linking path to answer.
    pub alpha: f64,
    /// Snippets handed to the answer model.
    pub k: usize,
    /// Background facts per candidate for the decision step.
    pub context_limit: usize,
    pub enable_linking: bool,
    pub enable_rag: bool,
    pub enable_decision: bool,
    pub fallback: FallbackOrder,
    /// Audit mode: let superseded facts into every path.
    pub include_superseded: bool,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            k: DEFAULT_K,
            context_limit: DEFAULT_K,
            enable_linking: true,
            enable_rag: true,
            enable_decision: true,
            fallback: FallbackOrder::PreferLink,
            include_superseded: false,
        }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<(), ReasonerError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ReasonerError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.k == 0 {
            return Err(ReasonerError::InvalidConfig("k must be positive".into()));
        }
        if !self.enable_linking && !self.enable_rag {
            return Err(ReasonerError::InvalidConfig(
                "at least one of linking and rag must be enabled".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ReasonerError {
    #[error("invalid reasoner config: {0}")]
    InvalidConfig(String),
    #[error("no candidate answer for this hop")]
    Unresolved(Box<HopDiagnostics>),
}

/// Result of the relation-linking path. `answer` is empty for no answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub keyword: String,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LinkOutcome {
    fn empty(keyword: String) -> Self {
        Self {
            keyword,
            answer: String::new(),
            score: None,
            relation: None,
            error: None,
        }
    }

    fn failed(keyword: String, err: impl ToString) -> Self {
        Self {
            error: Some(err.to_string()),
            ..Self::empty(keyword)
        }
    }
}

fn neighborhood_for(graph: &KnowledgeGraph, subject: &EntityId, cfg: &ReasonerConfig) -> NeighborhoodTriples {
    graph
        .neighborhood(subject, cfg.include_superseded)
        .unwrap_or_else(|_| NeighborhoodTriples {
            entity: subject.clone(),
            items: Vec::new(),
        })
}

/// Relation-linking prediction for `subject`.
///
/// The tail of the best-matching relation is returned iff its cosine with
/// the keyword is at least `alpha`. Edited facts come first in the
/// neighborhood, so they win exact ties.
pub fn link_predict(
    graph: &KnowledgeGraph,
    subject: &EntityId,
    question: &str,
    cfg: &ReasonerConfig,
    gateway: &Gateway,
) -> LinkOutcome {
    let keyword = match gateway.extract_relation(question) {
        Ok(k) => k,
        Err(e) => return LinkOutcome::failed(String::new(), e),
    };
    if keyword.is_empty() {
        return LinkOutcome::empty(keyword);
    }
    let neighborhood = neighborhood_for(graph, subject, cfg);
    if neighborhood.is_empty() {
        return LinkOutcome::empty(keyword);
    }
    let query = match gateway.word_embed(&keyword) {
        Ok(v) => v,
        Err(e) => return LinkOutcome::failed(keyword, e),
    };
    let mut relation_vectors: HashMap<&str, EmbeddingVector> = HashMap::new();
    let mut best: Option<(f64, usize)> = None;
    for (i, item) in neighborhood.items.iter().enumerate() {
        if !relation_vectors.contains_key(item.relation.as_str()) {
            match gateway.word_embed(&item.relation) {
                Ok(v) => {
                    relation_vectors.insert(&item.relation, v);
                }
                Err(e) => return LinkOutcome::failed(keyword, e),
            }
        }
        let score = match cosine(&query, &relation_vectors[item.relation.as_str()]) {
            Ok(s) => s,
            Err(e) => return LinkOutcome::failed(keyword, e),
        };
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, i));
        }
    }
    let (score, i) = best.expect("non-empty neighborhood");
    let item = &neighborhood.items[i];
    LinkOutcome {
        answer: if score >= cfg.alpha {
            graph.tail_text(&item.tail).to_string()
        } else {
            String::new()
        },
        keyword,
        score: Some(score),
        relation: Some(item.relation.clone()),
        error: None,
    }
}

/// Result of the retrieval-augmented path. `answer` is empty on abstention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagOutcome {
    pub answer: String,
    pub snippets: Vec<Snippet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Retrieval-augmented answer. An unlinked subject contributes no snippets;
/// the answer model is still asked.
pub fn rag_answer(
    graph: &KnowledgeGraph,
    subject: Option<&EntityId>,
    question: &str,
    image: Option<&ImageRef>,
    cfg: &ReasonerConfig,
    gateway: &Gateway,
) -> RagOutcome {
    let snippets = match subject {
        Some(id) => match topk_snippets(graph, question, &neighborhood_for(graph, id, cfg), cfg.k, gateway) {
            Ok(s) => s,
            Err(e) => {
                return RagOutcome {
                    answer: String::new(),
                    snippets: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        },
        None => Vec::new(),
    };
    match gateway.answer(question, image, &snippets) {
        Ok(answer) => RagOutcome {
            answer,
            snippets,
            error: None,
        },
        Err(e) => RagOutcome {
            answer: String::new(),
            snippets,
            error: Some(e.to_string()),
        },
    }
}

/// The two path answers for one hop (empty = no answer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub a_link: String,
    pub a_model: String,
    pub link_score: Option<f64>,
    pub snippets_used: Vec<Snippet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSource {
    /// Both paths gave the same answer.
    Agreement,
    /// Only one path gave an answer.
    SingleCandidate,
    /// The choice model picked between two different answers.
    Reflective,
    /// Decision disabled (or failed); the configured order picked.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub answer: String,
    pub source: DecisionSource,
    /// Background facts shown for (link, model) candidates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contexts: Option<[Vec<String>; 2]>,
    pub flags: Vec<String>,
}

fn decide_locally(pair: &CandidatePair) -> Option<Decision> {
    let (l, m) = (pair.a_link.trim(), pair.a_model.trim());
    let decided = |answer: &str, source| Decision {
        answer: answer.to_string(),
        source,
        contexts: None,
        flags: Vec::new(),
    };
    match (l.is_empty(), m.is_empty()) {
        (true, true) => None,
        (false, true) => Some(decided(&pair.a_link, DecisionSource::SingleCandidate)),
        (true, false) => Some(decided(&pair.a_model, DecisionSource::SingleCandidate)),
        _ if normalize(l) == normalize(m) => Some(decided(&pair.a_link, DecisionSource::Agreement)),
        _ => None,
    }
}

/// Decision without the choice model: the first non-empty candidate in the
/// configured order. `None` when both are empty.
pub fn fallback_decide(pair: &CandidatePair, order: FallbackOrder) -> Option<Decision> {
    let ordered = match order {
        FallbackOrder::PreferLink => [&pair.a_link, &pair.a_model],
        FallbackOrder::PreferModel => [&pair.a_model, &pair.a_link],
    };
    ordered.into_iter().find(|a| !a.trim().is_empty()).map(|a| Decision {
        answer: a.clone(),
        source: DecisionSource::Fallback,
        contexts: None,
        flags: Vec::new(),
    })
}

/// Background facts for one candidate answer: the first `limit` facts of the
/// entity it links to, or nothing when it links to no entity.
fn background(graph: &KnowledgeGraph, answer: &str, cfg: &ReasonerConfig) -> Option<Vec<String>> {
    let linked = graph.link_entity(answer).ok().flatten()?;
    let n = neighborhood_for(graph, &linked.id, cfg);
    let head = graph.display_name(&linked.id);
    Some(
        n.items
            .iter()
            .take(cfg.context_limit)
            .map(|i| render_triple(head, &i.relation, graph.tail_text(&i.tail)))
            .collect(),
    )
}

/// Reconciles the two candidates. Agreement or a single candidate needs no
/// model call; otherwise both candidates' backgrounds go to the choice model
/// and its pick is always one of the two.
pub fn reflective_decide(
    graph: &KnowledgeGraph,
    question: &str,
    image: Option<&ImageRef>,
    pair: &CandidatePair,
    cfg: &ReasonerConfig,
    gateway: &Gateway,
) -> Option<Decision> {
    if pair.a_link.trim().is_empty() && pair.a_model.trim().is_empty() {
        return None;
    }
    if let Some(d) = decide_locally(pair) {
        return Some(d);
    }
    let mut flags = Vec::new();
    let mut ctx = |answer: &str, which: &str| {
        background(graph, answer, cfg).unwrap_or_else(|| {
            flags.push(format!("context-unlinked:{which}"));
            Vec::new()
        })
    };
    let link = CandidateContext {
        answer: pair.a_link.clone(),
        context: ctx(&pair.a_link, "link"),
    };
    let model = CandidateContext {
        answer: pair.a_model.clone(),
        context: ctx(&pair.a_model, "model"),
    };
    let contexts = Some([link.context.clone(), model.context.clone()]);
    match gateway.choose(question, image, &link, &model) {
        Ok(choice) => {
            if choice.coerced {
                flags.push("choice-coerced".into());
            }
            Some(Decision {
                answer: choice.answer,
                source: DecisionSource::Reflective,
                contexts,
                flags,
            })
        }
        Err(e) => {
            let mut d = fallback_decide(pair, cfg.fallback)?;
            flags.push(format!("decision-gateway-error: {e}"));
            d.flags = flags;
            d.contexts = contexts;
            Some(d)
        }
    }
}

/// Everything a reasoning hop computed, for the trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject_surface: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linked_subject: Option<EntityId>,
    /// Linking candidate; absent iff the path is disabled, `""` for no answer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_link: Option<String>,
    /// Model candidate; absent iff the path is disabled, `""` for abstention.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_model: Option<String>,
    /// Present iff the linking path ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkOutcome>,
    /// Present iff the retrieval-augmented path ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rag: Option<RagOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl HopDiagnostics {
    pub fn a_link(&self) -> Option<&str> {
        self.a_link.as_deref()
    }

    pub fn a_model(&self) -> Option<&str> {
        self.a_model.as_deref()
    }
}

/// Answers one reasoning sub-question about `subject_surface`.
///
/// Links the subject, runs the enabled paths (concurrently when the
/// `parallel` feature is on), then decides. Fails with
/// [`ReasonerError::Unresolved`] when no path produced an answer.
pub fn answer_reasoning_hop(
    graph: &KnowledgeGraph,
    subject_surface: Option<&str>,
    question: &str,
    image: Option<&ImageRef>,
    cfg: &ReasonerConfig,
    gateway: &Gateway,
) -> Result<(String, HopDiagnostics), ReasonerError> {
    cfg.validate()?;
    let mut diag = HopDiagnostics {
        subject_surface: subject_surface.map(str::to_string),
        ..HopDiagnostics::default()
    };
    let linked = subject_surface
        .filter(|s| !s.trim().is_empty())
        .and_then(|s| graph.link_entity(s).ok().flatten());
    match &linked {
        Some(l) if l.ambiguous => diag.flags.push("subject-ambiguous".into()),
        Some(_) => {}
        None => diag.flags.push("subject-unlinked".into()),
    }
    let subject = linked.map(|l| l.id);
    diag.linked_subject = subject.clone();

    let (link, rag) = par::join(
        || {
            cfg.enable_linking.then(|| match &subject {
                Some(id) => link_predict(graph, id, question, cfg, gateway),
                None => LinkOutcome::empty(String::new()),
            })
        },
        || {
            cfg.enable_rag
                .then(|| rag_answer(graph, subject.as_ref(), question, image, cfg, gateway))
        },
    );
    for (name, err) in [
        ("link", link.as_ref().and_then(|l| l.error.as_ref())),
        ("rag", rag.as_ref().and_then(|r| r.error.as_ref())),
    ] {
        if let Some(e) = err {
            diag.flags.push(format!("{name}-gateway-error: {e}"));
        }
    }
    let pair = CandidatePair {
        a_link: link.as_ref().map(|l| l.answer.clone()).unwrap_or_default(),
        a_model: rag.as_ref().map(|r| r.answer.clone()).unwrap_or_default(),
        link_score: link.as_ref().and_then(|l| l.score),
        snippets_used: rag.as_ref().map(|r| r.snippets.clone()).unwrap_or_default(),
    };
    diag.a_link = link.as_ref().map(|l| l.answer.clone());
    diag.a_model = rag.as_ref().map(|r| r.answer.clone());
    diag.link = link;
    diag.rag = rag;

    let decision = if cfg.enable_decision {
        reflective_decide(graph, question, image, &pair, cfg, gateway)
    } else {
        fallback_decide(&pair, cfg.fallback)
    };
    match decision {
        Some(d) => {
            let answer = d.answer.clone();
            diag.decision = Some(d);
            Ok((answer, diag))
        }
        None => Err(ReasonerError::Unresolved(Box::new(diag))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockConfig, MockScript, Templates};
    use crate::graph::{EditQuadruple, GraphConfig};
    use std::sync::Arc;

    fn graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new(GraphConfig::default());
        let add = |g: &mut KnowledgeGraph, id: &str, name: &str, aliases: &[&str]| {
            g.add_entity(
                EntityId::new(id),
                name,
                aliases.iter().map(|s| s.to_string()),
                None,
            )
            .unwrap()
        };
        add(&mut g, "G", "Gustavo Santaolalla", &[]);
        add(&mut g, "AR", "Argentina", &["Argentine Republic"]);
        add(&mut g, "US", "United States of America", &["USA"]);
        add(&mut g, "BA", "Buenos Aires", &["Buenos Ayres"]);
        add(&mut g, "L", "Lonely", &[]);
        g.add_triple(&EntityId::new("G"), "birthplace country", "US").unwrap();
        g.add_triple(&EntityId::new("G"), "birth year", "1951-08-19").unwrap();
        g.add_triple(&EntityId::new("AR"), "capital", "BA").unwrap();
        g.add_triple(&EntityId::new("US"), "capital", "Washington, D.C.").unwrap();
        g
    }

    fn gateway(script: MockScript) -> Gateway {
        let cfg = MockConfig::new(5).with_script(script);
        Gateway::new(Arc::new(MockBackend::new(cfg)), Templates::defaults(), 512)
    }

    #[test]
    fn link_exact_relation_scores_one() {
        let g = graph();
        let out = link_predict(
            &g,
            &EntityId::new("AR"),
            "What is the capital of Argentina?",
            &ReasonerConfig::default(),
            &gateway(MockScript::default()),
        );
        assert_eq!(out.keyword, "capital");
        assert_eq!(out.answer, "Buenos Aires");
        assert!((out.score.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn link_below_threshold_is_empty() {
        let g = graph();
        let mut script = MockScript::default();
        script.extract.insert("Where is his home?".into(), "home".into());
        let out = link_predict(&g, &EntityId::new("G"), "Where is his home?", &ReasonerConfig::default(), &gateway(script));
        assert_eq!(out.keyword, "home");
        assert_eq!(out.answer, "");
        assert!(out.score.unwrap() < DEFAULT_ALPHA);
    }

    #[test]
    fn link_without_keyword_is_empty() {
        let g = graph();
        let out = link_predict(&g, &EntityId::new("G"), "Hello there", &ReasonerConfig::default(), &gateway(MockScript::default()));
        assert_eq!(out, LinkOutcome::empty(String::new()));
    }

    #[test]
    fn link_prefers_edited_facts() {
        let mut g = graph();
        g.apply_edit(&EditQuadruple {
            subject: "Gustavo Santaolalla".into(),
            image: None,
            relation: "birthplace country".into(),
            old: "USA".into(),
            new: "Argentina".into(),
        })
        .unwrap();
        let gw = gateway(MockScript::default());
        let q = "What is the birthplace country of Gustavo Santaolalla?";
        let out = link_predict(&g, &EntityId::new("G"), q, &ReasonerConfig::default(), &gw);
        assert_eq!(out.answer, "Argentina");
        let audit = ReasonerConfig {
            include_superseded: true,
            ..ReasonerConfig::default()
        };
        // edited first even when superseded facts are visible
        assert_eq!(link_predict(&g, &EntityId::new("G"), q, &audit, &gw).answer, "Argentina");
    }

    #[test]
    fn rag_reads_snippets_and_abstains_without() {
        let g = graph();
        let gw = gateway(MockScript::default());
        let cfg = ReasonerConfig::default();
        let out = rag_answer(&g, Some(&EntityId::new("G")), "What is the birth year of Gustavo Santaolalla?", None, &cfg, &gw);
        assert_eq!(out.answer, "1951-08-19");
        assert_eq!(out.snippets.len(), 2);
        assert!(out.snippets[0].score >= out.snippets[1].score);
        let out = rag_answer(&g, Some(&EntityId::new("L")), "What is the capital of Lonely?", None, &cfg, &gw);
        assert_eq!(out.answer, "");
        assert!(out.snippets.is_empty());
    }

    fn pair(l: &str, m: &str) -> CandidatePair {
        CandidatePair {
            a_link: l.into(),
            a_model: m.into(),
            link_score: None,
            snippets_used: vec![],
        }
    }

    #[test]
    fn decide_short_circuits() {
        let g = graph();
        let gw = gateway(MockScript::default());
        let cfg = ReasonerConfig::default();
        let d = reflective_decide(&g, "q", None, &pair("X", "x"), &cfg, &gw).unwrap();
        assert_eq!((d.answer.as_str(), d.source), ("X", DecisionSource::Agreement));
        let d = reflective_decide(&g, "q", None, &pair("", "Y"), &cfg, &gw).unwrap();
        assert_eq!((d.answer.as_str(), d.source), ("Y", DecisionSource::SingleCandidate));
        assert!(reflective_decide(&g, "q", None, &pair("", ""), &cfg, &gw).is_none());
    }

    #[test]
    fn decide_gathers_contexts() {
        let g = graph();
        let mut script = MockScript::default();
        script.choose.insert("Which capital?".into(), "Buenos Aires".into());
        let gw = gateway(script);
        let d = reflective_decide(&g, "Which capital?", None, &pair("Argentina", "Buenos Aires"), &ReasonerConfig::default(), &gw)
            .unwrap();
        assert_eq!(d.answer, "Buenos Aires");
        assert_eq!(d.source, DecisionSource::Reflective);
        let ctx = d.contexts.unwrap();
        assert_eq!(ctx[0], vec!["(Argentina, capital, Buenos Aires)".to_string()]);
        assert!(ctx[1].is_empty());
        let d = reflective_decide(&g, "q", None, &pair("Argentina", "Atlantis"), &ReasonerConfig::default(), &gw).unwrap();
        assert!(d.flags.contains(&"context-unlinked:model".to_string()));
        assert!(d.answer == "Argentina" || d.answer == "Atlantis");
    }

    #[test]
    fn fallback_order() {
        assert_eq!(fallback_decide(&pair("A", "B"), FallbackOrder::PreferLink).unwrap().answer, "A");
        assert_eq!(fallback_decide(&pair("A", "B"), FallbackOrder::PreferModel).unwrap().answer, "B");
        assert_eq!(fallback_decide(&pair("", "B"), FallbackOrder::PreferLink).unwrap().answer, "B");
        assert!(fallback_decide(&pair("", ""), FallbackOrder::PreferLink).is_none());
    }

    #[test]
    fn hop_ablations() {
        let g = graph();
        let gw = gateway(MockScript::default());
        let q = "What is the capital of Argentina?";
        let full = answer_reasoning_hop(&g, Some("argentine republic"), q, None, &ReasonerConfig::default(), &gw).unwrap();
        assert_eq!(full.0, "Buenos Aires");
        assert_eq!(full.1.decision.as_ref().unwrap().source, DecisionSource::Agreement);

        let no_rag = ReasonerConfig {
            enable_rag: false,
            ..ReasonerConfig::default()
        };
        let (a, d) = answer_reasoning_hop(&g, Some("Argentina"), q, None, &no_rag, &gw).unwrap();
        assert_eq!(a, "Buenos Aires");
        assert!(d.a_model().is_none());
        assert_eq!(d.link, full.1.link);

        let no_link = ReasonerConfig {
            enable_linking: false,
            ..ReasonerConfig::default()
        };
        let (_, d) = answer_reasoning_hop(&g, Some("Argentina"), q, None, &no_link, &gw).unwrap();
        assert!(d.a_link().is_none());
        assert_eq!(d.rag, full.1.rag);

        let neither = ReasonerConfig {
            enable_linking: false,
            enable_rag: false,
            ..ReasonerConfig::default()
        };
        assert!(matches!(
            answer_reasoning_hop(&g, Some("Argentina"), q, None, &neither, &gw),
            Err(ReasonerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn unlinkable_subject_is_unresolved_under_mock() {
        let g = graph();
        let gw = gateway(MockScript::default());
        match answer_reasoning_hop(&g, Some("Atlantis"), "What is the capital of Atlantis?", None, &ReasonerConfig::default(), &gw) {
            Err(ReasonerError::Unresolved(d)) => {
                assert!(d.flags.contains(&"subject-unlinked".to_string()));
                assert_eq!(d.a_model(), Some(""));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
