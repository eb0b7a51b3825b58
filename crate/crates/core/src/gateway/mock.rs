//! Deterministic in-process backend.
//!
//! Embeddings are seeded hash projections: every token maps to a fixed
//! pseudo-random vector, texts embed as the normalized sum of their content
//! tokens, and an image adds a heavier vector keyed by its visual identity.
//! Rephrased images are declared equivalent to their original through
//! `image_aliases`, which is what lets the mock retrieve across visual
//! rephrasing.
//!
//! The generative endpoints answer from a [`MockScript`] first and fall back
//! to simple oracles that read the provided snippets, so the whole pipeline
//! is a pure function of its inputs and the seed.

use std::collections::BTreeMap;
use std::hash::Hasher;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{AnswerRequest, Backend, ChooseRequest, GatewayError, PromptTemplate};
use crate::graph::ImageRef;
use crate::normalize::normalize;
use crate::retrieval::DEFAULT_DIMS;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "in", "is", "it", "of", "on",
    "or", "that", "the", "this", "to", "was", "were", "what", "when", "where", "which", "who", "whom", "whose", "with",
];

/// Fixed replies keyed by question (matched after normalization).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub decompose: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub extract: BTreeMap<String, String>,
    #[serde(default)]
    pub answer: BTreeMap<String, String>,
    #[serde(default)]
    pub choose: BTreeMap<String, String>,
    /// Fixed word vectors keyed by phrase, for controlled similarities.
    #[serde(default)]
    pub word_embed: BTreeMap<String, Vec<f32>>,
}

impl MockScript {
    fn normalized(self) -> Self {
        fn keys<V>(m: BTreeMap<String, V>) -> BTreeMap<String, V> {
            m.into_iter().map(|(k, v)| (normalize(&k), v)).collect()
        }
        Self {
            decompose: keys(self.decompose),
            extract: keys(self.extract),
            answer: keys(self.answer),
            choose: keys(self.choose),
            word_embed: keys(self.word_embed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub seed: u64,
    pub dims: usize,
    /// Weight of the image component relative to the unit text component.
    pub image_weight: f32,
    /// Rephrased image -> image with the same visual identity.
    pub image_aliases: BTreeMap<ImageRef, ImageRef>,
    /// Relation labels the keyword extractor recognizes.
    pub relation_vocab: Vec<String>,
    pub script: MockScript,
}

impl MockConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            dims: DEFAULT_DIMS,
            image_weight: 3.0,
            image_aliases: BTreeMap::new(),
            relation_vocab: Vec::new(),
            script: MockScript::default(),
        }
    }

    pub fn with_dims(mut self, dims: usize) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_image_aliases(mut self, pairs: impl IntoIterator<Item = (ImageRef, ImageRef)>) -> Self {
        self.image_aliases.extend(pairs);
        self
    }

    pub fn with_relations(mut self, labels: impl IntoIterator<Item = String>) -> Self {
        self.relation_vocab.extend(labels);
        self
    }

    pub fn with_script(mut self, script: MockScript) -> Self {
        self.script = script;
        self
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    cfg: MockConfig,
    script: MockScript,
    /// Vocabulary labels as word sequences, longest first.
    vocab: Vec<(Vec<String>, String)>,
    relation_pattern: Regex,
}

fn words(text: &str) -> Vec<String> {
    normalize(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Lowercased words minus stopwords.
pub(crate) fn content_tokens(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in &mut v {
            *x = (f64::from(*x) / n) as f32;
        }
    }
    v
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Self {
        let mut vocab: Vec<(Vec<String>, String)> = cfg
            .relation_vocab
            .iter()
            .map(|label| (words(label), label.clone()))
            .filter(|(w, _)| !w.is_empty())
            .collect();
        vocab.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.1.cmp(&b.1)));
        vocab.dedup_by(|a, b| a.1 == b.1);
        Self {
            script: cfg.script.clone().normalized(),
            cfg,
            vocab,
            relation_pattern: Regex::new(r"(?i)^\s*what\s+is\s+the\s+(.+)\s+of\s+\S.*$").expect("valid regex"),
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    fn token_vector(&self, domain: &str, token: &str) -> Vec<f32> {
        let mut h = fnv::FnvHasher::default();
        h.write_u64(self.cfg.seed);
        h.write(domain.as_bytes());
        h.write_u8(0xff);
        h.write(token.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        (0..self.cfg.dims).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }

    fn bag(&self, domain: &str, tokens: &[String]) -> Vec<f32> {
        let mut acc = vec![0.0f32; self.cfg.dims];
        for t in tokens {
            for (a, v) in acc.iter_mut().zip(self.token_vector(domain, t)) {
                *a += v;
            }
        }
        unit(acc)
    }

    fn visual_identity<'a>(&'a self, image: &'a ImageRef) -> &'a ImageRef {
        self.cfg.image_aliases.get(image).unwrap_or(image)
    }

    /// Chain of relations encoded by a question of the form
    /// `What is the r_n of the ... of the r_2 of the entity shown in the image?`,
    /// in hop order.
    fn templated_chain(question: &str) -> Option<Vec<String>> {
        let q = question.trim().trim_end_matches('?').trim();
        let prefix = "what is the ";
        if q.len() < prefix.len() || !q.is_char_boundary(prefix.len()) || !q[..prefix.len()].eq_ignore_ascii_case(prefix) {
            return None;
        }
        let segments: Vec<&str> = q[prefix.len()..].split(" of the ").collect();
        let (last, relations) = segments.split_last()?;
        if normalize(last) != "entity shown in the image" {
            return None;
        }
        Some(relations.iter().rev().map(|r| r.trim().to_string()).collect())
    }

    fn vocab_keyword(&self, question: &str) -> Option<String> {
        let q = words(question);
        let mut best: Option<(usize, usize, &str)> = None;
        for (label_words, label) in &self.vocab {
            let n = label_words.len();
            if let Some(pos) = q.windows(n).position(|w| w == label_words.as_slice()) {
                let better = match best {
                    None => true,
                    Some((bn, bpos, _)) => n > bn || (n == bn && pos < bpos),
                };
                if better {
                    best = Some((n, pos, label));
                }
            }
        }
        best.map(|(_, _, l)| l.to_string())
    }
}

impl Backend for MockBackend {
    fn embed(&self, text: &str, image: Option<&ImageRef>) -> Result<Vec<f32>, GatewayError> {
        let tokens = content_tokens(text);
        let mut v = if tokens.is_empty() {
            vec![0.0; self.cfg.dims]
        } else {
            self.bag("text", &tokens)
        };
        if let Some(img) = image {
            let iv = unit(self.token_vector("image", self.visual_identity(img).as_str()));
            for (a, b) in v.iter_mut().zip(iv) {
                *a += self.cfg.image_weight * b;
            }
        }
        Ok(v)
    }

    fn word_embed(&self, phrase: &str) -> Result<Vec<f32>, GatewayError> {
        if let Some(v) = self.script.word_embed.get(&normalize(phrase)) {
            return Ok(v.clone());
        }
        let mut tokens = content_tokens(phrase);
        if tokens.is_empty() {
            tokens = words(phrase);
        }
        Ok(self.bag("word", &tokens))
    }

    fn decompose(&self, question: &str, _template: &PromptTemplate) -> Result<Vec<String>, GatewayError> {
        if let Some(lines) = self.script.decompose.get(&normalize(question)) {
            return Ok(lines.clone());
        }
        match Self::templated_chain(question) {
            Some(relations) => {
                let mut lines = vec!["1: Who is the entity shown in [IMAGE]?".to_string()];
                for (i, r) in relations.iter().enumerate() {
                    lines.push(format!("{}: What is the {r} of [ENT]?", i + 2));
                }
                Ok(lines)
            }
            None => Ok(vec![format!("1: {}", question.trim())]),
        }
    }

    fn extract(&self, question: &str) -> Result<String, GatewayError> {
        if let Some(k) = self.script.extract.get(&normalize(question)) {
            return Ok(k.clone());
        }
        if let Some(k) = self.vocab_keyword(question) {
            return Ok(k);
        }
        let q = question.trim().trim_end_matches('?');
        Ok(self
            .relation_pattern
            .captures(q)
            .map(|c| c[1].trim().to_string())
            .unwrap_or_default())
    }

    fn answer(&self, req: &AnswerRequest<'_>) -> Result<String, GatewayError> {
        if let Some(a) = self.script.answer.get(&normalize(req.question)) {
            return Ok(a.clone());
        }
        let question: Vec<String> = content_tokens(req.question);
        let mut best: Option<(f64, &str)> = None;
        for s in req.snippets {
            let rel = content_tokens(&s.relation);
            if rel.is_empty() {
                continue;
            }
            let hits = rel.iter().filter(|t| question.contains(t)).count();
            let score = hits as f64 / rel.len() as f64;
            if score > 0.0 && best.is_none_or(|(b, _)| score > b) {
                best = Some((score, &s.tail));
            }
        }
        Ok(best.map(|(_, t)| t.to_string()).unwrap_or_default())
    }

    fn choose(&self, req: &ChooseRequest<'_>) -> Result<String, GatewayError> {
        if let Some(a) = self.script.choose.get(&normalize(req.question)) {
            return Ok(a.clone());
        }
        let [a, b] = req.candidates;
        Ok(if b.context.len() > a.context.len() {
            b.answer.clone()
        } else {
            a.answer.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, SubQuestionKind, Templates};
    use crate::graph::TripleId;
    use crate::retrieval::{cosine, Snippet};
    use std::sync::Arc;

    fn gw(cfg: MockConfig) -> Gateway {
        let dims = cfg.dims;
        Gateway::new(Arc::new(MockBackend::new(cfg)), Templates::defaults(), dims)
    }

    fn snippet(relation: &str, tail: &str) -> Snippet {
        Snippet {
            text: format!("(X, {relation}, {tail})"),
            head: "X".into(),
            relation: relation.into(),
            tail: tail.into(),
            triple: TripleId(0),
            score: 0.0,
        }
    }

    #[test]
    fn embeddings_are_seeded_and_stable() {
        let a = gw(MockConfig::new(7));
        let b = gw(MockConfig::new(7));
        let img = ImageRef::new("img/1.jpg");
        assert_eq!(a.embed("Roy Bittan", Some(&img)).unwrap(), b.embed("Roy Bittan", Some(&img)).unwrap());
        let c = gw(MockConfig::new(8));
        assert_ne!(a.embed("Roy Bittan", None).unwrap(), c.embed("Roy Bittan", None).unwrap());
    }

    #[test]
    fn embedding_depends_on_both_fields() {
        let g = gw(MockConfig::new(1));
        let base = g.embed("Roy Bittan", Some(&ImageRef::new("i1"))).unwrap();
        assert_ne!(base, g.embed("Roy Bittan", Some(&ImageRef::new("i2"))).unwrap());
        assert_ne!(base, g.embed("Gustavo Santaolalla", Some(&ImageRef::new("i1"))).unwrap());
        assert_eq!(base.dims(), DEFAULT_DIMS);
    }

    #[test]
    fn rephrased_image_aliases_to_original() {
        let g = gw(MockConfig::new(1).with_image_aliases([(ImageRef::new("i1b"), ImageRef::new("i1"))]));
        let entry = g.embed("Gustavo Santaolalla", Some(&ImageRef::new("i1"))).unwrap();
        let other = g.embed("Roy Bittan", Some(&ImageRef::new("i9"))).unwrap();
        let query = g.embed("Who is the entity shown in [IMAGE]?", Some(&ImageRef::new("i1b"))).unwrap();
        assert!(cosine(&query, &entry).unwrap() > 0.8);
        assert!(cosine(&query, &other).unwrap() < 0.3);
    }

    #[test]
    fn word_embed_orders_related_phrases() {
        let g = gw(MockConfig::new(3));
        let cap = g.word_embed("capital").unwrap();
        let near = cosine(&cap, &g.word_embed("capital city").unwrap()).unwrap();
        let far = cosine(&cap, &g.word_embed("birth year").unwrap()).unwrap();
        assert!(near >= far, "{near} vs {far}");
        assert_eq!(g.word_embed("capital").unwrap(), cap);
    }

    #[test]
    fn templated_decomposition() {
        let g = gw(MockConfig::new(0));
        let subs = g
            .decompose("What is the capital of the birthplace country of the entity shown in the image?")
            .unwrap();
        let texts: Vec<_> = subs.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "Who is the entity shown in [IMAGE]?",
                "What is the birthplace country of [ENT]?",
                "What is the capital of [ENT]?"
            ]
        );
        assert_eq!(subs[0].kind, SubQuestionKind::Visual);
        let single = g.decompose("Who painted the Mona Lisa?").unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].text, "Who painted the Mona Lisa?");
    }

    #[test]
    fn keyword_extraction() {
        let g = gw(MockConfig::new(0));
        assert_eq!(
            g.extract_relation("What is the country of birth of Gustavo Santaolalla?").unwrap(),
            "country of birth"
        );
        assert_eq!(g.extract_relation("Hello there").unwrap(), "");
        let g = gw(MockConfig::new(0).with_relations(["capital".to_string(), "birthplace country".to_string(), "country".to_string()]));
        assert_eq!(g.extract_relation("What is the birthplace country of [ENT]?").unwrap(), "birthplace country");
        assert_eq!(g.extract_relation("What is the capital of Country 12?").unwrap(), "capital");
    }

    #[test]
    fn oracle_answer_reads_snippets() {
        let g = gw(MockConfig::new(0));
        let snippets = [snippet("birth year", "1951-08-19"), snippet("birthplace country", "Argentina")];
        assert_eq!(
            g.answer("What is the birthplace country of Gustavo Santaolalla?", None, &snippets).unwrap(),
            "Argentina"
        );
        assert_eq!(g.answer("What is the birthplace country of X?", None, &[]).unwrap(), "");
        assert_eq!(g.answer("Who is his favourite chef?", None, &snippets).unwrap(), "");
    }

    #[test]
    fn script_overrides() {
        let mut script = MockScript::default();
        script.answer.insert("What is the home country of  Brussels?".into(), "Kingdom of Belgium".into());
        let g = gw(MockConfig::new(0).with_script(script));
        assert_eq!(
            g.answer("what is the home country of Brussels?", None, &[]).unwrap(),
            "Kingdom of Belgium"
        );
    }
}
