//! Alias-aware answer matching and the M-Acc / H-Acc / I-Acc metrics.
//!
//! - M-Acc: the final answer is in the final alias set.
//! - H-Acc: every hop answer is in its hop's alias set, final included.
//! - I-Acc: the first-hop (visual) retrieval names the gold entity; only
//!   instances with a visual first hop count.
//!
//! Unresolved and errored traces count as incorrect. Ratios are exact
//! integer counts.

mod dataset;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

pub use dataset::{
    load_dataset, read_dataset, write_dataset, DatasetError, DatasetStats, HopGold, MultihopInstance, MAX_HOPS,
    MIN_HOPS,
};

use crate::normalize::Normalizer;
use crate::pipeline::{ImageUsed, ReasoningTrace, TraceStatus};

/// Accepted surface forms of one answer, stored normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasSet {
    members: BTreeSet<String>,
    normalizer: Normalizer,
}

impl AliasSet {
    /// `None` when no member survives normalization.
    pub fn new<S: AsRef<str>>(members: impl IntoIterator<Item = S>, normalizer: Normalizer) -> Option<Self> {
        let members: BTreeSet<String> = members
            .into_iter()
            .map(|m| normalizer.normalize(m.as_ref()))
            .filter(|m| !m.is_empty())
            .collect();
        (!members.is_empty()).then_some(Self { members, normalizer })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, predicted: &str) -> bool {
        self.members.contains(&self.normalizer.normalize(predicted))
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(String::as_str)
    }
}

/// Exact match after normalization; a missing or empty prediction never
/// matches.
pub fn match_answer(predicted: Option<&str>, gold: &AliasSet) -> bool {
    predicted.is_some_and(|p| !p.trim().is_empty() && gold.contains(p))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Ratio {
    pub correct: usize,
    pub total: usize,
}

impl Ratio {
    pub fn new(correct: usize, total: usize) -> Self {
        assert!(correct <= total, "ratio {correct}/{total}");
        Self { correct, total }
    }

    /// 0 for an empty denominator.
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ({}/{})", self.value(), self.correct, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("trace for unknown instance {0}")]
    UnknownInstance(String),
    #[error("duplicate trace for instance {0}")]
    DuplicateTrace(String),
    #[error("no trace for instance {0}")]
    MissingTrace(String),
}

/// Per-instance correctness bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceScore {
    pub final_correct: bool,
    pub all_hops_correct: bool,
    /// `None` without a visual first hop.
    pub image_correct: Option<bool>,
    pub hop_count_mismatch: bool,
}

pub fn score_instance(trace: &ReasoningTrace, inst: &MultihopInstance, normalizer: Normalizer) -> InstanceScore {
    let completed = trace.status == TraceStatus::Completed;
    let final_gold = AliasSet::new(inst.final_gold(), normalizer);
    let final_correct = completed
        && final_gold
            .as_ref()
            .is_some_and(|g| match_answer(trace.final_answer.as_deref(), g));
    let hop_count_mismatch = trace.hops.len() != inst.hops.len();
    let hops_ok = !hop_count_mismatch
        && trace.hops.iter().zip(&inst.hops).all(|(t, g)| {
            AliasSet::new(&g.answers, normalizer).is_some_and(|set| match_answer(t.answer.as_deref(), &set))
        });
    let image_correct = inst.has_visual_first_hop().then(|| {
        let gold = AliasSet::new(&inst.hops[0].answers, normalizer);
        trace
            .hops
            .first()
            .zip(gold.as_ref())
            .is_some_and(|(h, g)| match_answer(h.answer.as_deref(), g))
    });
    InstanceScore {
        final_correct,
        all_hops_correct: hops_ok && final_correct,
        image_correct,
        hop_count_mismatch,
    }
}

/// Pairs traces with instances one-to-one by id.
fn align<'a>(
    traces: &'a [ReasoningTrace],
    instances: &'a [MultihopInstance],
) -> Result<Vec<(&'a ReasoningTrace, &'a MultihopInstance)>, EvalError> {
    let by_id: HashMap<&str, &MultihopInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(traces.len());
    for t in traces {
        let inst = by_id
            .get(t.instance.as_str())
            .ok_or_else(|| EvalError::UnknownInstance(t.instance.clone()))?;
        if !seen.insert(t.instance.as_str()) {
            return Err(EvalError::DuplicateTrace(t.instance.clone()));
        }
        pairs.push((t, *inst));
    }
    if let Some(missing) = instances.iter().find(|i| !seen.contains(i.id.as_str())) {
        return Err(EvalError::MissingTrace(missing.id.clone()));
    }
    Ok(pairs)
}

fn count(
    traces: &[ReasoningTrace],
    instances: &[MultihopInstance],
    normalizer: Normalizer,
    pick: impl Fn(&InstanceScore) -> Option<bool>,
) -> Result<Ratio, EvalError> {
    let mut r = Ratio::default();
    for (t, i) in align(traces, instances)? {
        if let Some(ok) = pick(&score_instance(t, i, normalizer)) {
            r.add(ok);
        }
    }
    Ok(r)
}

pub fn m_acc(traces: &[ReasoningTrace], instances: &[MultihopInstance], normalizer: Normalizer) -> Result<Ratio, EvalError> {
    count(traces, instances, normalizer, |s| Some(s.final_correct))
}

pub fn h_acc(traces: &[ReasoningTrace], instances: &[MultihopInstance], normalizer: Normalizer) -> Result<Ratio, EvalError> {
    count(traces, instances, normalizer, |s| Some(s.all_hops_correct))
}

pub fn i_acc(traces: &[ReasoningTrace], instances: &[MultihopInstance], normalizer: Normalizer) -> Result<Ratio, EvalError> {
    count(traces, instances, normalizer, |s| s.image_correct)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub evaluated: usize,
    pub completed: usize,
    pub unresolved: usize,
    pub error: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HopBucket {
    pub m_acc: Ratio,
    pub h_acc: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalReport {
    pub image_mode: ImageUsed,
    pub m_acc: Ratio,
    pub h_acc: Ratio,
    pub i_acc: Ratio,
    pub per_hop_count: BTreeMap<usize, HopBucket>,
    pub counts: Counts,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Scores one image mode's traces. Traces and instances must pair up
    /// one-to-one by id.
    pub fn compute(
        image_mode: ImageUsed,
        traces: &[ReasoningTrace],
        instances: &[MultihopInstance],
        normalizer: Normalizer,
    ) -> Result<Self, EvalError> {
        let mut report = EvalReport {
            image_mode,
            m_acc: Ratio::default(),
            h_acc: Ratio::default(),
            i_acc: Ratio::default(),
            per_hop_count: BTreeMap::new(),
            counts: Counts::default(),
            warnings: Vec::new(),
        };
        let mut pairs = align(traces, instances)?;
        pairs.sort_by(|a, b| a.1.id.cmp(&b.1.id));
        for (t, inst) in pairs {
            let s = score_instance(t, inst, normalizer);
            report.counts.evaluated += 1;
            match t.status {
                TraceStatus::Completed => report.counts.completed += 1,
                TraceStatus::Unresolved(_) => report.counts.unresolved += 1,
                TraceStatus::Error => report.counts.error += 1,
            }
            if s.hop_count_mismatch && t.status == TraceStatus::Completed {
                report.warnings.push(format!(
                    "instance {}: {} trace hops vs {} gold hops",
                    inst.id,
                    t.hops.len(),
                    inst.hops.len()
                ));
            }
            report.m_acc.add(s.final_correct);
            report.h_acc.add(s.all_hops_correct);
            if let Some(ok) = s.image_correct {
                report.i_acc.add(ok);
            }
            let bucket = report.per_hop_count.entry(inst.hop_count()).or_default();
            bucket.m_acc.add(s.final_correct);
            bucket.h_acc.add(s.all_hops_correct);
        }
        Ok(report)
    }
}

/// Splits traces by the image actually used and scores each group.
pub fn evaluate(
    traces: &[ReasoningTrace],
    instances: &[MultihopInstance],
    normalizer: Normalizer,
) -> Result<Vec<EvalReport>, EvalError> {
    let mut groups: BTreeMap<ImageUsed, Vec<ReasoningTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.image_mode).or_default().push(t.clone());
    }
    groups
        .into_iter()
        .map(|(mode, ts)| EvalReport::compute(mode, &ts, instances, normalizer))
        .collect()
}

/// Plain-text table: one row per (image mode, metric), one column for the
/// overall score plus one per hop count present.
pub fn render_table(reports: &[EvalReport]) -> String {
    let hops: BTreeSet<usize> = reports.iter().flat_map(|r| r.per_hop_count.keys().copied()).collect();
    let mut header = vec!["image".to_string(), "metric".into(), "all".into()];
    header.extend(hops.iter().map(|h| format!("{h}-hop")));
    let mut rows = vec![header];
    for r in reports {
        let mode = r.image_mode.as_str().to_string();
        let cell = |x: Option<&Ratio>| x.map(|r| format!("{:.2}", r.value() * 100.0)).unwrap_or_else(|| "-".into());
        let m: fn(&HopBucket) -> Ratio = |b| b.m_acc;
        let h: fn(&HopBucket) -> Ratio = |b| b.h_acc;
        for (name, overall, per_hop) in [("M-Acc", &r.m_acc, Some(m)), ("H-Acc", &r.h_acc, Some(h)), ("I-Acc", &r.i_acc, None)] {
            let mut row = vec![mode.clone(), name.to_string(), cell(Some(overall))];
            for h in &hops {
                let v = per_hop.and_then(|f| r.per_hop_count.get(h).map(f));
                row.push(cell(v.as_ref()));
            }
            rows.push(row);
        }
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
