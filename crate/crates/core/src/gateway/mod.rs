//! The contract every learned component is reached through.
//!
//! A [`Backend`] speaks the raw protocol (one method per endpoint). The
//! [`Gateway`] wraps a backend and enforces the contract on top of it:
//! sub-question parsing, dimension checks, answer trimming, abstention, and
//! the candidate-only rule for `choose`.

mod http;
mod mock;
mod templates;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::graph::ImageRef;
use crate::normalize::normalize;
use crate::retrieval::{EmbeddingVector, Snippet};

pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockConfig, MockScript};
pub use templates::{PromptTemplate, TemplateError, TemplateName, Templates};

/// Placeholder for the question image inside a sub-question.
pub const IMAGE_TOKEN: &str = "[IMAGE]";
/// Placeholder for the previous hop's answer inside a sub-question.
pub const ENT_TOKEN: &str = "[ENT]";

#[derive(Debug, Clone, thiserror::Error)]
pub enum GatewayError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend response violates schema: {0}")]
    Schema(String),
    #[error("cannot parse decomposition output: {raw:?}")]
    Unparseable { raw: String },
    #[error("embedding has {got} dims, expected {expected}")]
    DimsMismatch { expected: usize, got: usize },
    #[error("embedding contains non-finite values or is zero")]
    BadVector,
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("both candidates are empty")]
    BothCandidatesEmpty,
    #[error("image `{image}` unreadable: {message}")]
    Image { image: String, message: String },
}

impl GatewayError {
    /// Whether the failure says the backend could not be reached at all.
    pub fn is_unreachable(&self) -> bool {
        matches!(self, GatewayError::Timeout | GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubQuestionKind {
    Visual,
    Reasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubQuestion {
    /// 1-based position in the decomposition.
    pub index: usize,
    pub text: String,
    pub kind: SubQuestionKind,
}

impl SubQuestion {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let kind = classify(&text);
        Self { index, text, kind }
    }

    pub fn has_ent(&self) -> bool {
        self.text.contains(ENT_TOKEN)
    }

    pub fn has_image(&self) -> bool {
        self.text.contains(IMAGE_TOKEN)
    }
}

/// Visual iff the text mentions the image placeholder.
pub fn classify(text: &str) -> SubQuestionKind {
    if text.contains(IMAGE_TOKEN) {
        SubQuestionKind::Visual
    } else {
        SubQuestionKind::Reasoning
    }
}

/// Parses decomposition lines of the form `k: text`, numbered from 1.
pub fn parse_subquestions(lines: &[String]) -> Result<Vec<SubQuestion>, GatewayError> {
    let raw = || GatewayError::Unparseable { raw: lines.join("\n") };
    let mut out = Vec::new();
    for line in lines.iter().flat_map(|l| l.lines()) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (num, text) = line.split_once(':').ok_or_else(raw)?;
        let index: usize = num.trim().parse().map_err(|_| raw())?;
        let text = text.trim();
        if index != out.len() + 1 || text.is_empty() {
            return Err(raw());
        }
        out.push(SubQuestion::new(index, text));
    }
    if out.is_empty() {
        return Err(raw());
    }
    Ok(out)
}

/// A candidate answer plus its rendered background facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateContext {
    pub answer: String,
    pub context: Vec<String>,
}

pub struct AnswerRequest<'a> {
    pub question: &'a str,
    pub image: Option<&'a ImageRef>,
    pub snippets: &'a [Snippet],
    pub template: &'a PromptTemplate,
}

pub struct ChooseRequest<'a> {
    pub question: &'a str,
    pub image: Option<&'a ImageRef>,
    pub candidates: [&'a CandidateContext; 2],
    pub template: &'a PromptTemplate,
}

/// Raw protocol, one method per endpoint. Implementations must be safe to
/// call from several threads at once.
pub trait Backend: Send + Sync {
    fn embed(&self, text: &str, image: Option<&ImageRef>) -> Result<Vec<f32>, GatewayError>;
    fn word_embed(&self, phrase: &str) -> Result<Vec<f32>, GatewayError>;
    /// Returns the raw `k: text` lines.
    fn decompose(&self, question: &str, template: &PromptTemplate) -> Result<Vec<String>, GatewayError>;
    fn extract(&self, question: &str) -> Result<String, GatewayError>;
    fn answer(&self, req: &AnswerRequest<'_>) -> Result<String, GatewayError>;
    fn choose(&self, req: &ChooseRequest<'_>) -> Result<String, GatewayError>;
}

/// Outcome of [`Gateway::choose`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Choice {
    pub answer: String,
    /// The backend was consulted (false on agreement or a lone candidate).
    pub consulted: bool,
    /// The backend answered outside the candidate set and was snapped to
    /// the nearest candidate.
    pub coerced: bool,
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    templates: Templates,
    dims: usize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("dims", &self.dims).finish_non_exhaustive()
    }
}

/// First non-empty line, trimmed. The empty string means abstention.
fn first_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string()
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, templates: Templates, dims: usize) -> Self {
        Self {
            backend,
            templates,
            dims,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    fn check_vector(&self, values: Vec<f32>, expected: Option<usize>) -> Result<EmbeddingVector, GatewayError> {
        if let Some(expected) = expected {
            if values.len() != expected {
                return Err(GatewayError::DimsMismatch {
                    expected,
                    got: values.len(),
                });
            }
        }
        let v = EmbeddingVector::new(values).map_err(|_| GatewayError::BadVector)?;
        if v.norm() == 0.0 {
            return Err(GatewayError::BadVector);
        }
        Ok(v)
    }

    pub fn decompose(&self, question: &str) -> Result<Vec<SubQuestion>, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput("question"));
        }
        let lines = self.backend.decompose(question, &self.templates.decompose)?;
        parse_subquestions(&lines)
    }

    /// Relation keyword of a question; empty when none was found.
    pub fn extract_relation(&self, question: &str) -> Result<String, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::EmptyInput("question"));
        }
        Ok(first_line(&self.backend.extract(question)?))
    }

    pub fn word_embed(&self, phrase: &str) -> Result<EmbeddingVector, GatewayError> {
        if phrase.trim().is_empty() {
            return Err(GatewayError::EmptyInput("phrase"));
        }
        self.check_vector(self.backend.word_embed(phrase)?, None)
    }

    /// Joint text/image embedding; the width must equal the configured dims.
    pub fn embed(&self, text: &str, image: Option<&ImageRef>) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() && image.is_none() {
            return Err(GatewayError::EmptyInput("embedding input"));
        }
        self.check_vector(self.backend.embed(text, image)?, Some(self.dims))
    }

    /// Retrieval-augmented answer; `""` is abstention.
    pub fn answer(&self, question: &str, image: Option<&ImageRef>, snippets: &[Snippet]) -> Result<String, GatewayError> {
        let raw = self.backend.answer(&AnswerRequest {
            question,
            image,
            snippets,
            template: &self.templates.answer,
        })?;
        Ok(first_line(&raw))
    }

    /// Picks one of two candidates. Agreement and a lone non-empty candidate
    /// are decided locally; otherwise the backend's reply is mapped back onto
    /// the candidate set.
    pub fn choose(
        &self,
        question: &str,
        image: Option<&ImageRef>,
        a: &CandidateContext,
        b: &CandidateContext,
    ) -> Result<Choice, GatewayError> {
        let local = |answer: &str| Choice {
            answer: answer.to_string(),
            consulted: false,
            coerced: false,
        };
        match (a.answer.trim().is_empty(), b.answer.trim().is_empty()) {
            (true, true) => return Err(GatewayError::BothCandidatesEmpty),
            (false, true) => return Ok(local(&a.answer)),
            (true, false) => return Ok(local(&b.answer)),
            _ => {}
        }
        if normalize(&a.answer) == normalize(&b.answer) {
            return Ok(local(&a.answer));
        }
        let raw = first_line(&self.backend.choose(&ChooseRequest {
            question,
            image,
            candidates: [a, b],
            template: &self.templates.choose,
        })?);
        let picked = normalize(&raw);
        for c in [a, b] {
            if normalize(&c.answer) == picked {
                return Ok(Choice {
                    answer: c.answer.clone(),
                    consulted: true,
                    coerced: false,
                });
            }
        }
        let sim = |c: &CandidateContext| strsim::normalized_levenshtein(&normalize(&c.answer), &picked);
        let answer = if sim(b) > sim(a) { &b.answer } else { &a.answer };
        Ok(Choice {
            answer: answer.clone(),
            consulted: true,
            coerced: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Backend returning canned strings and counting `choose` calls.
    struct Canned {
        choose_reply: String,
        answer_reply: String,
        lines: Vec<String>,
        dims: usize,
        choose_calls: AtomicUsize,
    }

    impl Canned {
        fn new() -> Self {
            Self {
                choose_reply: String::new(),
                answer_reply: String::new(),
                lines: vec![],
                dims: 4,
                choose_calls: AtomicUsize::new(0),
            }
        }
    }

    impl Backend for Canned {
        fn embed(&self, _: &str, _: Option<&ImageRef>) -> Result<Vec<f32>, GatewayError> {
            Ok(vec![1.0; self.dims])
        }
        fn word_embed(&self, _: &str) -> Result<Vec<f32>, GatewayError> {
            Ok(vec![0.0; 3])
        }
        fn decompose(&self, _: &str, _: &PromptTemplate) -> Result<Vec<String>, GatewayError> {
            Ok(self.lines.clone())
        }
        fn extract(&self, _: &str) -> Result<String, GatewayError> {
            Ok("  located in \nnoise".into())
        }
        fn answer(&self, _: &AnswerRequest<'_>) -> Result<String, GatewayError> {
            Ok(self.answer_reply.clone())
        }
        fn choose(&self, _: &ChooseRequest<'_>) -> Result<String, GatewayError> {
            self.choose_calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.choose_reply.clone())
        }
    }

    fn gw(b: Canned) -> (Gateway, Arc<Canned>) {
        let b = Arc::new(b);
        (Gateway::new(b.clone(), Templates::defaults(), 4), b)
    }

    fn cand(a: &str) -> CandidateContext {
        CandidateContext {
            answer: a.into(),
            context: vec![],
        }
    }

    #[test]
    fn parses_numbered_lines() {
        let lines = vec![
            "1: Who is the person in [IMAGE]?".to_string(),
            "2: What is the country of birth of [ENT]?\n3: What is the capital of [ENT]?".to_string(),
        ];
        let subs = parse_subquestions(&lines).unwrap();
        assert_eq!(subs.len(), 3);
        assert_eq!(subs[0].kind, SubQuestionKind::Visual);
        assert_eq!(subs[1].kind, SubQuestionKind::Reasoning);
        assert!(subs[2].has_ent());
        assert_eq!(subs[2].text, "What is the capital of [ENT]?");
    }

    #[test]
    fn rejects_malformed_decomposition() {
        for bad in [vec!["no number"], vec!["2: skipped one"], vec![""], vec!["1:   "]] {
            let lines: Vec<String> = bad.into_iter().map(String::from).collect();
            match parse_subquestions(&lines) {
                Err(GatewayError::Unparseable { raw }) => assert_eq!(raw, lines.join("\n")),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn decompose_goes_through_parser() {
        let mut c = Canned::new();
        c.lines = vec!["1: Who is this? [IMAGE]".into()];
        let (g, _) = gw(c);
        assert_eq!(g.decompose("q").unwrap().len(), 1);
        assert!(matches!(g.decompose("  "), Err(GatewayError::EmptyInput(_))));
    }

    #[test]
    fn embed_checks_dims_and_zero() {
        let mut c = Canned::new();
        c.dims = 3;
        let (g, _) = gw(c);
        assert!(matches!(g.embed("x", None), Err(GatewayError::DimsMismatch { expected: 4, got: 3 })));
        assert!(matches!(g.word_embed("x"), Err(GatewayError::BadVector)));
    }

    #[test]
    fn extract_and_answer_take_first_line() {
        let mut c = Canned::new();
        c.answer_reply = "\n  Kingdom of Belgium  \nbecause...".into();
        let (g, _) = gw(c);
        assert_eq!(g.extract_relation("q?").unwrap(), "located in");
        assert_eq!(g.answer("q?", None, &[]).unwrap(), "Kingdom of Belgium");
    }

    #[test]
    fn choose_short_circuits() {
        let (g, b) = gw(Canned::new());
        let c = g.choose("q", None, &cand("X"), &cand(" x ")).unwrap();
        assert_eq!((c.answer.as_str(), c.consulted), ("X", false));
        let c = g.choose("q", None, &cand(""), &cand("Y")).unwrap();
        assert_eq!((c.answer.as_str(), c.consulted), ("Y", false));
        assert!(matches!(
            g.choose("q", None, &cand(""), &cand(" ")),
            Err(GatewayError::BothCandidatesEmpty)
        ));
        assert_eq!(b.choose_calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn choose_coerces_to_candidate() {
        let mut c = Canned::new();
        c.choose_reply = "The answer is Brussel".into();
        let (g, b) = gw(c);
        let got = g.choose("q", None, &cand("Belgium"), &cand("Brussels")).unwrap();
        assert_eq!(got.answer, "Brussels");
        assert!(got.coerced && got.consulted);
        assert_eq!(b.choose_calls.load(Ordering::SeqCst), 1);

        let mut c = Canned::new();
        c.choose_reply = "brussels".into();
        let (g, _) = gw(c);
        let got = g.choose("q", None, &cand("Belgium"), &cand("Brussels")).unwrap();
        assert_eq!(got.answer, "Brussels");
        assert!(!got.coerced);
    }

    #[test]
    fn classify_placeholders() {
        assert_eq!(classify("Who is in [IMAGE]?"), SubQuestionKind::Visual);
        assert_eq!(classify("Where was [ENT] born?"), SubQuestionKind::Reasoning);
        assert_eq!(classify("Is [ENT] in [IMAGE]?"), SubQuestionKind::Visual);
    }
}
