//! JSON-over-HTTP backend.
//!
//! Every endpoint is a `POST` with a UTF-8 JSON body. Images travel as
//! base64 in `image_b64`, read from `image_root` joined with the handle.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{AnswerRequest, Backend, ChooseRequest, GatewayError, PromptTemplate};
use crate::graph::ImageRef;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub image_root: Option<PathBuf>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_ms: 30_000,
            retries: 2,
            image_root: None,
        }
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct VectorReply {
    vector: Vec<f32>,
}

#[derive(Deserialize)]
struct DecomposeReply {
    subquestions: Vec<String>,
}

#[derive(Deserialize)]
struct KeywordReply {
    keyword: String,
}

#[derive(Deserialize)]
struct AnswerReply {
    answer: String,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn image_b64(&self, image: Option<&ImageRef>) -> Result<Value, GatewayError> {
        let Some(image) = image else {
            return Ok(Value::Null);
        };
        let path = match &self.cfg.image_root {
            Some(root) => root.join(image.as_str()),
            None => PathBuf::from(image.as_str()),
        };
        let bytes = std::fs::read(&path).map_err(|e| GatewayError::Image {
            image: image.as_str().to_string(),
            message: e.to_string(),
        })?;
        Ok(Value::String(base64::engine::general_purpose::STANDARD.encode(bytes)))
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<String, GatewayError> {
        let mut resp = self.agent.post(url).send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout,
            other => GatewayError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout,
            other => GatewayError::Transport(other.to_string()),
        })?;
        if status != 200 {
            return Err(GatewayError::Status { status, body: text });
        }
        Ok(text)
    }

    fn post<T: DeserializeOwned>(&self, path: &str, mut body: Value) -> Result<T, GatewayError> {
        // Optional fields are omitted rather than sent as null.
        if let Value::Object(map) = &mut body {
            map.retain(|_, v| !v.is_null());
        }
        let url = self.url(path);
        let mut attempt = 0;
        let text = loop {
            match self.post_once(&url, &body) {
                Ok(text) => break text,
                Err(e) => {
                    let retryable = e.is_unreachable() || matches!(e, GatewayError::Status { status, .. } if status >= 500);
                    if !retryable || attempt >= self.cfg.retries {
                        return Err(e);
                    }
                    attempt += 1;
                }
            }
        };
        serde_json::from_str(&text).map_err(|e| GatewayError::Schema(format!("/{path}: {e}")))
    }
}

impl Backend for HttpBackend {
    fn embed(&self, text: &str, image: Option<&ImageRef>) -> Result<Vec<f32>, GatewayError> {
        let body = json!({ "text": text, "image_b64": self.image_b64(image)? });
        Ok(self.post::<VectorReply>("embed", body)?.vector)
    }

    fn word_embed(&self, phrase: &str) -> Result<Vec<f32>, GatewayError> {
        Ok(self.post::<VectorReply>("word_embed", json!({ "phrase": phrase }))?.vector)
    }

    fn decompose(&self, question: &str, template: &PromptTemplate) -> Result<Vec<String>, GatewayError> {
        let body = json!({ "question": question, "template": template.text });
        Ok(self.post::<DecomposeReply>("decompose", body)?.subquestions)
    }

    fn extract(&self, question: &str) -> Result<String, GatewayError> {
        Ok(self.post::<KeywordReply>("extract", json!({ "question": question }))?.keyword)
    }

    fn answer(&self, req: &AnswerRequest<'_>) -> Result<String, GatewayError> {
        let snippets: Vec<&str> = req.snippets.iter().map(|s| s.text.as_str()).collect();
        let body = json!({
            "question": req.question,
            "image_b64": self.image_b64(req.image)?,
            "snippets": snippets,
            "template": req.template.text,
        });
        Ok(self.post::<AnswerReply>("answer", body)?.answer)
    }

    fn choose(&self, req: &ChooseRequest<'_>) -> Result<String, GatewayError> {
        let body = json!({
            "question": req.question,
            "image_b64": self.image_b64(req.image)?,
            "candidates": req.candidates,
            "template": req.template.text,
        });
        Ok(self.post::<AnswerReply>("choose", body)?.answer)
    }
}
