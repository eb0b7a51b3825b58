//! Prompt templates with `{name}` placeholders.
//!
//! Defaults ship with the crate; a directory holding `decompose.txt`,
//! `answer.txt` and/or `choose.txt` overrides them file by file.

use std::path::Path;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TemplateName {
    Decompose,
    Answer,
    Choose,
}

impl TemplateName {
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateName::Decompose => "decompose.txt",
            TemplateName::Answer => "answer.txt",
            TemplateName::Choose => "choose.txt",
        }
    }

    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::Decompose => &["question"],
            TemplateName::Answer => &["question", "snippets"],
            TemplateName::Choose => &["question", "candidate_1", "context_1", "candidate_2", "context_2"],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {name:?} lacks placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        name: TemplateName,
        placeholder: &'static str,
    },
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for &placeholder in name.required_placeholders() {
            if !text.contains(&format!("{{{placeholder}}}")) {
                return Err(TemplateError::MissingPlaceholder { name, placeholder });
            }
        }
        Ok(Self { name, text })
    }

    /// Substitutes `{key}` for each pair. Unknown placeholders stay as-is.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (key, value) in vars {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub decompose: PromptTemplate,
    pub answer: PromptTemplate,
    pub choose: PromptTemplate,
}

impl Templates {
    pub fn defaults() -> Self {
        let t = |name, text: &str| PromptTemplate::new(name, text).expect("shipped template is valid");
        Self {
            decompose: t(TemplateName::Decompose, include_str!("../../templates/decompose.txt")),
            answer: t(TemplateName::Answer, include_str!("../../templates/answer.txt")),
            choose: t(TemplateName::Choose, include_str!("../../templates/choose.txt")),
        }
    }

    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut out = Self::defaults();
        for slot in [&mut out.decompose, &mut out.answer, &mut out.choose] {
            let path = dir.join(slot.name.file_name());
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                *slot = PromptTemplate::new(slot.name, text)?;
            }
        }
        Ok(out)
    }
}
