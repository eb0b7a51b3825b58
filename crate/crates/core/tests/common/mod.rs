#![allow(dead_code)]

use std::sync::Arc;

use hybrid_dmkg::fixtures::{oracle_mock, Fixture};
use hybrid_dmkg::gateway::{Backend, Gateway, MockBackend, MockConfig, MockScript, Templates};
use hybrid_dmkg::graph::GraphConfig;
use hybrid_dmkg::retrieval::{EntityIndex, DEFAULT_IN_FLIGHT};
use hybrid_dmkg::KnowledgeGraph;

pub fn mock_gateway(cfg: MockConfig) -> Gateway {
    let dims = cfg.dims;
    Gateway::new(Arc::new(MockBackend::new(cfg)), Templates::defaults(), dims)
}

pub fn backend_gateway(backend: impl Backend + 'static, dims: usize) -> Gateway {
    Gateway::new(Arc::new(backend), Templates::defaults(), dims)
}

/// Edited graph, oracle mock gateway and entity index for a fixture.
pub struct Setup {
    pub graph: KnowledgeGraph,
    pub gateway: Gateway,
    pub index: EntityIndex,
}

pub fn setup(fixture: &Fixture, seed: u64, script: MockScript) -> Setup {
    let (graph, _) = fixture.edited_graph(GraphConfig::default()).expect("fixture edits apply");
    let gateway = mock_gateway(oracle_mock(&graph, &fixture.instances, seed).with_script(script));
    let index = EntityIndex::build(&graph, &gateway, DEFAULT_IN_FLIGHT).expect("index builds");
    Setup { graph, gateway, index }
}

use hybrid_dmkg::eval::MultihopInstance;
use hybrid_dmkg::gateway::SubQuestionKind;
use hybrid_dmkg::pipeline::{HopTrace, ImageUsed, ReasoningTrace, TraceStatus, TRACE_VERSION};

/// A trace for `inst` whose hop `i` is answered with a gold alias when
/// `hop_ok[i]` holds and with a wrong string otherwise. The final answer is
/// planted separately. An `Unresolved(k)` trace stops at hop `k`, which
/// carries no answer, like the pipeline's own traces.
pub fn planted_trace(inst: &MultihopInstance, hop_ok: &[bool], final_ok: bool, status: TraceStatus) -> ReasoningTrace {
    let mut hops: Vec<HopTrace> = inst
        .hops
        .iter()
        .zip(hop_ok)
        .enumerate()
        .map(|(i, (gold, &ok))| HopTrace {
            index: i + 1,
            sub_question: format!("hop {}", i + 1),
            question: format!("hop {}", i + 1),
            kind: if i == 0 { SubQuestionKind::Visual } else { SubQuestionKind::Reasoning },
            answer: Some(if ok { gold.answers[0].clone() } else { format!("wrong {}", i + 1) }),
            retrieved_entity: None,
            retrieval_score: None,
            diagnostics: None,
            flags: Vec::new(),
        })
        .collect();
    let mut final_answer = Some(if final_ok { inst.final_gold()[0].clone() } else { "wrong final".to_string() });
    if let TraceStatus::Unresolved(k) = status {
        hops.truncate(k);
        hops[k - 1].answer = None;
        final_answer = None;
    }
    ReasoningTrace {
        trace_version: TRACE_VERSION,
        instance: inst.id.clone(),
        image_mode: ImageUsed::Original,
        image_used: ImageUsed::Original,
        image: inst.image.clone(),
        question: inst.question.clone(),
        status,
        final_answer,
        sub_questions: Vec::new(),
        hops,
        error: None,
        backend_unreachable: false,
    }
}
