mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;

use hybrid_dmkg::eval::{evaluate, match_answer, AliasSet};
use hybrid_dmkg::fixtures::{person_example, synthetic, NAME_RELATION, RELATIONS};
use hybrid_dmkg::gateway::{AnswerRequest, Backend, ChooseRequest, GatewayError, MockConfig, MockScript, PromptTemplate};
use hybrid_dmkg::graph::{GraphConfig, Provenance};
use hybrid_dmkg::normalize::normalize;
use hybrid_dmkg::pipeline::TraceStatus;
use hybrid_dmkg::reasoner::{link_predict, reflective_decide, CandidatePair, ReasonerConfig};
use hybrid_dmkg::retrieval::{cosine, top_k_by_cosine, EmbeddingVector, EntityIndex};
use hybrid_dmkg::{EditQuadruple, EntityId, ImageRef, KnowledgeGraph, Normalizer};

fn vector(dims: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dims).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn scalar_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut d, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        d += x * y;
        na += x * x;
        nb += y * y;
    }
    d / (na.sqrt() * nb.sqrt())
}

fn ev(v: Vec<f32>) -> EmbeddingVector {
    EmbeddingVector::new(v).unwrap()
}

/// Scales that are exact in binary floating point.
fn exact_scale() -> impl Strategy<Value = f32> {
    prop::sample::select(vec![0.125f32, 0.5, 2.0, 8.0, 1024.0])
}

proptest! {
    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,30}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once.clone());
        let strict = Normalizer::STRICT.normalize(&s);
        prop_assert_eq!(Normalizer::STRICT.normalize(&strict), strict);
    }

    #[test]
    fn matching_is_reflexive(s in "\\PC{1,30}") {
        prop_assume!(!normalize(&s).is_empty());
        for n in [Normalizer::DEFAULT, Normalizer::STRICT] {
            let set = AliasSet::new([s.as_str()], n).unwrap();
            prop_assert!(match_answer(Some(&s), &set));
        }
    }

    #[test]
    fn matching_ignores_case_and_spacing(
        words in prop::collection::vec("[a-zA-Z.,'-]{1,8}", 1..5),
        pad in " {0,3}",
        gap in " {1,3}",
    ) {
        let gold = words.join(" ");
        let set = AliasSet::new([gold.as_str()], Normalizer::DEFAULT).unwrap();
        let perturbed = format!("{pad}{}{pad}", words.join(&gap).to_uppercase());
        prop_assert!(match_answer(Some(&perturbed), &set));
        let strict = AliasSet::new([gold.as_str()], Normalizer::STRICT).unwrap();
        let spaced = format!("{pad}{}{pad}", words.join(&gap));
        prop_assert!(match_answer(Some(&spaced), &strict));
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(u in vector(8), v in vector(8)) {
        let (a, b) = (ev(u.clone()), ev(v.clone()));
        let c = cosine(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(c, cosine(&b, &a).unwrap());
        prop_assert!((c - scalar_cosine(&u, &v)).abs() < 1e-9);
        prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_ignores_positive_scaling(u in vector(8), v in vector(8), k in 0.01f32..100.0) {
        let (a, b) = (ev(u), ev(v));
        prop_assert!((cosine(&a.scaled(k), &b).unwrap() - cosine(&a, &b).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn top1_matches_brute_force(q in vector(6), cands in prop::collection::vec(vector(6), 1..40)) {
        let index = EntityIndex::from_entries(
            6,
            cands.iter().enumerate().map(|(i, c)| (EntityId::new(format!("E{i:03}")), ImageRef::new(format!("{i}.jpg")), ev(c.clone()))),
        ).unwrap();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, c) in cands.iter().enumerate() {
            let s = cosine(&ev(q.clone()), &ev(c.clone())).unwrap();
            if s > best.1 {
                best = (i, s);
            }
        }
        let query = ev(q);
        let (id, score) = index.top1(&query).unwrap();
        prop_assert_eq!(id.as_str(), format!("E{:03}", best.0));
        prop_assert_eq!(score, best.1);
        prop_assert_eq!(index.top1_sequential(&query).unwrap(), (id.clone(), score));
        let scaled = index.top1(&query.scaled(8.0)).unwrap();
        prop_assert_eq!(scaled.0, id);
    }

    #[test]
    fn top1_ties_go_to_lowest_id(v in vector(4), n in 2usize..10) {
        let index = EntityIndex::from_entries(
            4,
            (0..n).rev().map(|i| (EntityId::new(format!("E{i}")), ImageRef::new(format!("{i}.jpg")), ev(v.clone()))),
        ).unwrap();
        let (id, _) = index.top1(&ev(v)).unwrap();
        prop_assert_eq!(id.as_str(), "E0");
    }

    #[test]
    fn topk_is_sorted_and_matches_the_oracle(
        q in vector(5),
        cands in prop::collection::vec(vector(5), 0..30),
        k in 0usize..35,
    ) {
        let cvs: Vec<_> = cands.iter().cloned().map(ev).collect();
        let got = top_k_by_cosine(&ev(q.clone()), &cvs, k).unwrap();
        prop_assert_eq!(got.len(), k.min(cands.len()));
        prop_assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
        let mut oracle: Vec<(usize, f64)> = cands.iter().enumerate().map(|(i, c)| (i, scalar_cosine(&q, c))).collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got_ids: BTreeSet<usize> = got.iter().map(|x| x.0).collect();
        let cutoff = got.last().map(|x| x.1);
        // Same set up to ties at the cut-off score.
        for (i, s) in oracle.iter().take(k) {
            let tied = cutoff.is_some_and(|c| (s - c).abs() < 1e-9);
            prop_assert!(got_ids.contains(i) || tied);
        }
    }
}

/// Word embedder with fixed vectors, all multiplied by `scale`; the
/// extractor always returns `keyword`.
struct StubWords {
    keyword: String,
    vectors: HashMap<String, Vec<f32>>,
    scale: f32,
}

impl Backend for StubWords {
    fn embed(&self, _: &str, _: Option<&ImageRef>) -> Result<Vec<f32>, GatewayError> {
        Err(GatewayError::Transport("unused".into()))
    }
    fn word_embed(&self, phrase: &str) -> Result<Vec<f32>, GatewayError> {
        let v = self.vectors.get(phrase).ok_or(GatewayError::BadVector)?;
        Ok(v.iter().map(|x| x * self.scale).collect())
    }
    fn decompose(&self, _: &str, _: &PromptTemplate) -> Result<Vec<String>, GatewayError> {
        Err(GatewayError::Transport("unused".into()))
    }
    fn extract(&self, _: &str) -> Result<String, GatewayError> {
        Ok(self.keyword.clone())
    }
    fn answer(&self, _: &AnswerRequest<'_>) -> Result<String, GatewayError> {
        Err(GatewayError::Transport("unused".into()))
    }
    fn choose(&self, _: &ChooseRequest<'_>) -> Result<String, GatewayError> {
        Err(GatewayError::Transport("unused".into()))
    }
}

fn star_graph(relations: usize) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new(GraphConfig::default());
    g.add_entity(EntityId::new("S"), "Subject", Vec::new(), None).unwrap();
    for r in 0..relations {
        g.add_triple(&EntityId::new("S"), &format!("rel{r}"), &format!("tail {r}")).unwrap();
    }
    g
}

fn stub_gateway(keyword: Vec<f32>, rels: &[Vec<f32>], scale: f32) -> hybrid_dmkg::gateway::Gateway {
    let mut vectors: HashMap<String, Vec<f32>> =
        rels.iter().enumerate().map(|(i, v)| (format!("rel{i}"), v.clone())).collect();
    vectors.insert("kw".into(), keyword);
    common::backend_gateway(StubWords { keyword: "kw".into(), vectors, scale }, 8)
}

proptest! {
    #[test]
    fn linking_respects_the_threshold_monotonically(
        kw in vector(4),
        rels in prop::collection::vec(vector(4), 1..6),
        a1 in 0.0f64..=1.0,
        a2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let g = star_graph(rels.len());
        let gw = stub_gateway(kw, &rels, 1.0);
        let run = |alpha| link_predict(&g, &EntityId::new("S"), "q?", &ReasonerConfig { alpha, ..ReasonerConfig::default() }, &gw);
        let (at_lo, at_hi) = (run(lo), run(hi));
        if !at_hi.answer.is_empty() {
            prop_assert_eq!(&at_lo.answer, &at_hi.answer);
            prop_assert!(at_hi.score.unwrap() >= hi);
        }
        if at_lo.answer.is_empty() {
            prop_assert!(at_hi.answer.is_empty());
        }
    }

    #[test]
    fn linking_ignores_vector_scale(
        kw in vector(4),
        rels in prop::collection::vec(vector(4), 1..6),
        alpha in 0.0f64..=1.0,
        scale in exact_scale(),
    ) {
        let g = star_graph(rels.len());
        let cfg = ReasonerConfig { alpha, ..ReasonerConfig::default() };
        let base = link_predict(&g, &EntityId::new("S"), "q?", &cfg, &stub_gateway(kw.clone(), &rels, 1.0));
        let scaled = link_predict(&g, &EntityId::new("S"), "q?", &cfg, &stub_gateway(kw, &rels, scale));
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn decision_stays_within_the_candidates(
        a_link in "[A-Za-z ]{0,12}",
        a_model in "[A-Za-z ]{0,12}",
        reply in "[A-Za-z ]{0,12}",
    ) {
        let question = "Which one is it?";
        let graph = person_example().edited_graph(GraphConfig::default()).unwrap().0;
        let script = MockScript { choose: BTreeMap::from([(question.to_string(), reply)]), ..MockScript::default() };
        let gw = common::mock_gateway(MockConfig::new(1).with_dims(8).with_script(script));
        let pair = CandidatePair { a_link: a_link.clone(), a_model: a_model.clone(), link_score: None, snippets_used: Vec::new() };
        match reflective_decide(&graph, question, None, &pair, &ReasonerConfig::default(), &gw) {
            Some(d) => prop_assert!(d.answer == a_link || d.answer == a_model),
            None => prop_assert!(a_link.trim().is_empty() && a_model.trim().is_empty()),
        }
    }
}

#[derive(Debug, Clone)]
struct PlantedEdit {
    entity: usize,
    relation: usize,
    new: String,
}

fn planted_edits(max: usize) -> impl Strategy<Value = Vec<PlantedEdit>> {
    prop::collection::vec(
        (0usize..1000, 0usize..=RELATIONS.len(), "[A-Z][a-z]{3,8}").prop_map(|(entity, relation, new)| PlantedEdit {
            entity,
            relation,
            new,
        }),
        0..max,
    )
}

fn realize(edits: &[PlantedEdit], g: &KnowledgeGraph) -> Vec<EditQuadruple> {
    let names: Vec<String> = g.entities().iter().map(|e| e.canonical_name.clone()).collect();
    edits
        .iter()
        .map(|p| {
            let relation = RELATIONS.get(p.relation).copied().unwrap_or(NAME_RELATION);
            EditQuadruple {
                subject: names[p.entity % names.len()].clone(),
                image: None,
                relation: relation.into(),
                old: "previous value".into(),
                new: p.new.clone(),
            }
        })
        .collect()
}

fn snapshot(g: &KnowledgeGraph) -> (Vec<u8>, Vec<u8>) {
    let (mut e, mut t) = (Vec::new(), Vec::new());
    g.write_entities(&mut e).unwrap();
    g.write_triples(&mut t).unwrap();
    (e, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edits_keep_history_and_one_active_fact(seed in 0u64..1000, plan in planted_edits(12)) {
        let mut g = synthetic(seed, 1).base_graph(GraphConfig::default()).unwrap();
        for edit in realize(&plan, &g) {
            let before = g.triples().len();
            let receipt = g.apply_edit(&edit).unwrap();
            prop_assert_eq!(g.triples().len(), before + 1);
            prop_assert!(g.triple(receipt.added).unwrap().active);
        }
        let mut active_edited: HashMap<(EntityId, String), usize> = HashMap::new();
        for t in g.triples().iter().filter(|t| t.active && t.provenance == Provenance::Edited) {
            *active_edited.entry((t.head.clone(), t.relation.clone())).or_default() += 1;
        }
        prop_assert!(active_edited.values().all(|&n| n == 1));
        for e in g.entities() {
            let all: BTreeSet<_> = g.neighborhood(&e.id, true).unwrap().items.iter().map(|i| i.triple).collect();
            let mut parts: BTreeSet<_> = g.neighborhood(&e.id, false).unwrap().items.iter().map(|i| i.triple).collect();
            parts.extend(g.superseded(&e.id).unwrap().iter().map(|t| t.id));
            prop_assert_eq!(all, parts);
        }
    }

    #[test]
    fn snapshots_are_deterministic_and_reload_identically(seed in 0u64..1000, plan in planted_edits(6)) {
        let fixture = synthetic(seed, 1);
        let build = || {
            let mut g = fixture.base_graph(GraphConfig::default()).unwrap();
            for edit in realize(&plan, &g) {
                g.apply_edit(&edit).unwrap();
            }
            g
        };
        let (e1, t1) = snapshot(&build());
        let (e2, t2) = snapshot(&build());
        prop_assert_eq!(&e1, &e2);
        prop_assert_eq!(&t1, &t2);
        let reloaded = KnowledgeGraph::load(&e1[..], &t1[..], GraphConfig::default()).unwrap();
        let (e3, t3) = snapshot(&reloaded);
        prop_assert_eq!(e1, e3);
        prop_assert_eq!(t1, t3);
    }

    #[test]
    fn index_rebuild_touches_only_edited_bindings(seed in 0u64..1000, plan in planted_edits(6)) {
        let fixture = synthetic(seed, 1);
        let mut g = fixture.base_graph(GraphConfig::default()).unwrap();
        let gw = common::mock_gateway(MockConfig::new(seed).with_dims(16));
        let before = EntityIndex::build(&g, &gw, 4).unwrap();
        // N edits plus created entities, plus images a rebind unbinds from
        // the entity it moves onto.
        let mut budget = plan.len();
        for edit in realize(&plan, &g) {
            let receipt = g.apply_edit(&edit).unwrap();
            budget += usize::from(receipt.created_entity.is_some());
            budget += usize::from(receipt.rebound.is_some_and(|r| r.displaced.is_some()));
        }
        let after = EntityIndex::build(&g, &gw, 4).unwrap();
        prop_assert!(after.changed_bindings(&before) <= budget);
    }

    #[test]
    fn metrics_agree_with_a_recount(
        seed in 0u64..1000,
        pattern in prop::collection::vec((prop::collection::vec(any::<bool>(), 5), any::<bool>(), 0u8..4), 8),
        order in Just(()).prop_perturb(|_, mut rng| rng.next_u64()),
    ) {
        let fixture = synthetic(seed, 2);
        let instances = &fixture.instances;
        let (mut m, mut h, mut i) = (0, 0, 0);
        let mut traces = Vec::new();
        for (inst, (hop_ok, final_ok, kind)) in instances.iter().zip(&pattern) {
            let n = inst.hops.len();
            let status = match kind {
                0 => TraceStatus::Error,
                1 => TraceStatus::Unresolved(1 + (seed as usize) % n),
                _ => TraceStatus::Completed,
            };
            let completed = status == TraceStatus::Completed;
            let answered_first = !matches!(status, TraceStatus::Unresolved(1));
            m += usize::from(completed && *final_ok);
            h += usize::from(completed && *final_ok && hop_ok[..n].iter().all(|&b| b));
            i += usize::from(hop_ok[0] && answered_first);
            traces.push(common::planted_trace(inst, &hop_ok[..n], *final_ok, status));
        }
        let report = &evaluate(&traces, instances, Normalizer::DEFAULT).unwrap()[0];
        prop_assert_eq!((report.m_acc.correct, report.h_acc.correct, report.i_acc.correct), (m, h, i));
        prop_assert_eq!(report.m_acc.total, instances.len());
        prop_assert!(report.h_acc.correct <= report.m_acc.correct);
        // Order of traces does not matter.
        let mut shuffled = traces.clone();
        let k = (order as usize) % shuffled.len();
        shuffled.rotate_left(k);
        let last = shuffled.len() - 1;
        shuffled.swap(0, last);
        let again = &evaluate(&shuffled, instances, Normalizer::DEFAULT).unwrap()[0];
        prop_assert_eq!(report, again);
    }
}
