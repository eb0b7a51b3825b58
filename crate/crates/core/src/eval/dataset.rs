//! Multihop QA datasets: one JSON instance per line.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AliasSet;
use crate::gateway::IMAGE_TOKEN;
use crate::graph::{EditQuadruple, ImageRef};
use crate::normalize::Normalizer;

pub const MIN_HOPS: usize = 2;
pub const MAX_HOPS: usize = 5;

/// Gold for one hop. A first-hop subject of `[IMAGE]` marks a visual hop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopGold {
    pub subject: String,
    pub relation: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultihopInstance {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub paraphrases: Vec<String>,
    pub image: ImageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_rephrased: Option<ImageRef>,
    #[serde(default)]
    pub edits: Vec<EditQuadruple>,
    pub hops: Vec<HopGold>,
    /// Defaults to the last hop's answers when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answers: Option<Vec<String>>,
}

impl MultihopInstance {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn has_visual_first_hop(&self) -> bool {
        self.hops.first().is_some_and(|h| h.subject.trim() == IMAGE_TOKEN)
    }

    pub fn final_gold(&self) -> &[String] {
        match &self.final_answers {
            Some(f) => f,
            None => self.hops.last().map(|h| h.answers.as_slice()).unwrap_or(&[]),
        }
    }

    /// Schema checks beyond what deserialization enforces. Returns the JSON
    /// path of the offending field and a message.
    pub fn validate(&self, normalizer: Normalizer) -> Result<(), (String, String)> {
        let bad = |path: &str, msg: &str| Err((path.to_string(), msg.to_string()));
        if self.id.trim().is_empty() {
            return bad("id", "empty id");
        }
        if self.question.trim().is_empty() {
            return bad("question", "empty question");
        }
        if !(MIN_HOPS..=MAX_HOPS).contains(&self.hops.len()) {
            return bad("hops", &format!("{} hops, expected {MIN_HOPS} to {MAX_HOPS}", self.hops.len()));
        }
        for (i, hop) in self.hops.iter().enumerate() {
            if hop.relation.trim().is_empty() {
                return bad(&format!("hops[{i}].relation"), "empty relation");
            }
            if hop.subject.trim().is_empty() {
                return bad(&format!("hops[{i}].subject"), "empty subject");
            }
            if AliasSet::new(&hop.answers, normalizer).is_none() {
                return bad(&format!("hops[{i}].answers"), "empty alias set");
            }
        }
        if let Some(f) = &self.final_answers {
            let Some(set) = AliasSet::new(f, normalizer) else {
                return bad("final_answers", "empty alias set");
            };
            let last = AliasSet::new(&self.hops[self.hops.len() - 1].answers, normalizer).expect("checked");
            if set != last {
                return bad("final_answers", "differs from the last hop's answers");
            }
        }
        for (i, e) in self.edits.iter().enumerate() {
            if let Err(err) = e.validate() {
                return bad(&format!("edits[{i}]"), &err.to_string());
            }
        }
        Ok(())
    }

    /// Hops (1-based) whose subject is not among the previous hop's answers.
    pub fn chain_violations(&self, normalizer: Normalizer) -> Vec<usize> {
        self.hops
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let prev = AliasSet::new(&w[0].answers, normalizer)?;
                (!prev.contains(&w[1].subject)).then_some(i + 2)
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset line {line}{}: field `{path}`: {message}", id.as_ref().map(|i| format!(" (instance {i})")).unwrap_or_default())]
    Schema {
        line: usize,
        id: Option<String>,
        path: String,
        message: String,
    },
    #[error("dataset line {line}: duplicate instance id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("reading dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Summary counts shaped like the benchmark's statistics table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub instances: usize,
    pub by_hops: BTreeMap<usize, usize>,
    pub sub_questions: usize,
    pub distinct_edits: usize,
    pub visual_first_hop: usize,
    pub mean_aliases: f64,
    /// (instance id, 1-based hop) pairs breaking the chain property.
    pub chain_violations: Vec<(String, usize)>,
}

impl DatasetStats {
    pub fn compute(instances: &[MultihopInstance], normalizer: Normalizer) -> Self {
        let mut s = DatasetStats {
            instances: instances.len(),
            ..Default::default()
        };
        let mut edits = BTreeSet::new();
        let (mut alias_total, mut alias_sets) = (0usize, 0usize);
        for inst in instances {
            *s.by_hops.entry(inst.hop_count()).or_default() += 1;
            s.sub_questions += inst.hop_count();
            s.visual_first_hop += usize::from(inst.has_visual_first_hop());
            for e in &inst.edits {
                edits.insert((
                    normalizer.normalize(&e.subject),
                    e.image.clone(),
                    normalizer.normalize(&e.relation),
                    normalizer.normalize(&e.old),
                    normalizer.normalize(&e.new),
                ));
            }
            for h in &inst.hops {
                if let Some(a) = AliasSet::new(&h.answers, normalizer) {
                    alias_total += a.len();
                    alias_sets += 1;
                }
            }
            s.chain_violations
                .extend(inst.chain_violations(normalizer).into_iter().map(|h| (inst.id.clone(), h)));
        }
        s.distinct_edits = edits.len();
        if alias_sets > 0 {
            s.mean_aliases = alias_total as f64 / alias_sets as f64;
        }
        s
    }
}

/// Parses and validates a dataset. Blank lines are skipped; ids must be
/// unique. Chain-property violations are not errors; see [`DatasetStats`].
pub fn read_dataset<R: BufRead>(reader: R, normalizer: Normalizer) -> Result<Vec<MultihopInstance>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: "<dataset>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: MultihopInstance = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            line: line_no,
            id: serde_json::from_str::<serde_json::Value>(&line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string)),
            path: "$".into(),
            message: e.to_string(),
        })?;
        inst.validate(normalizer).map_err(|(path, message)| DatasetError::Schema {
            line: line_no,
            id: Some(inst.id.clone()),
            path,
            message,
        })?;
        if !seen.insert(inst.id.clone()) {
            return Err(DatasetError::DuplicateId { line: line_no, id: inst.id });
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, normalizer: Normalizer) -> Result<Vec<MultihopInstance>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(std::io::BufReader::new(file), normalizer)
}

pub fn write_dataset<W: std::io::Write>(instances: &[MultihopInstance], mut out: W) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
