//! Sentence-level precision, recall and F1 for both stages, and compliance
//! rates.

mod published;
mod render;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{ActionCategory, SentenceRecord};
use crate::pipeline::{PayloadStats, PredictionRecord};
use crate::prompts::{PromptVersion, Verdict};
use crate::scalar::{mean, ratio, Real};

pub use published::{reported_column, ReportedColumn, ReportedTriple, Provenance, REPORTED};
pub use render::render_markdown;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("predictions do not cover the gold set: {}", describe_coverage(.missing, .unexpected, .duplicated))]
    Coverage { missing: Vec<String>, unexpected: Vec<String>, duplicated: Vec<String> },
    #[error("compliance rate is undefined for an empty prediction set")]
    UndefinedRate,
}

fn describe_coverage(missing: &[String], unexpected: &[String], duplicated: &[String]) -> String {
    let list = |name: &str, keys: &[String]| {
        const SHOWN: usize = 10;
        let mut s = format!("{} {name}", keys.len());
        if !keys.is_empty() {
            s.push_str(&format!(" [{}", keys.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ")));
            if keys.len() > SHOWN {
                s.push_str(", ...");
            }
            s.push(']');
        }
        s
    };
    format!("{}; {}; {}", list("missing", missing), list("unexpected", unexpected), list("duplicated", duplicated))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Counts with the positive and negative class exchanged.
    pub fn swapped(&self) -> ConfusionCounts {
        ConfusionCounts { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

/// Precision, recall and F1. An empty denominator yields 0 and sets the
/// matching `undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Score<T: Real> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from<T: Real>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / sum
    }
}

pub fn prf<T: Real>(counts: &ConfusionCounts) -> Score<T> {
    let p = ratio::<T>(counts.tp, counts.tp + counts.fp);
    let r = ratio::<T>(counts.tp, counts.tp + counts.fn_);
    let precision = p.unwrap_or_else(T::zero);
    let recall = r.unwrap_or_else(T::zero);
    Score {
        precision,
        recall,
        f1: f1_from(precision, recall),
        precision_undefined: p.is_none(),
        recall_undefined: r.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClassScore<T: Real> {
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub score: Score<T>,
}

impl<T: Real> ClassScore<T> {
    fn new(counts: ConfusionCounts) -> Self {
        ClassScore { counts, score: prf(&counts) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Stage1Report<T: Real> {
    pub actionable: ClassScore<T>,
    pub non_actionable: ClassScore<T>,
    /// F1 of the Actionable class.
    pub binary_f1: T,
    /// Means of the two class scores.
    pub macro_precision: T,
    pub macro_recall: T,
    pub macro_f1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CategoryScore<T: Real> {
    pub category: ActionCategory,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub score: Score<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Stage2Report<T: Real> {
    /// All seven categories in taxonomy order.
    pub categories: Vec<CategoryScore<T>>,
    pub macro_precision: T,
    pub macro_recall: T,
    pub macro_f1: T,
}

impl<T: Real> Stage2Report<T> {
    pub fn category(&self, c: ActionCategory) -> &CategoryScore<T> {
        &self.categories[c.index()]
    }

    pub fn f1(&self, c: ActionCategory) -> T {
        self.category(c).score.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Rate<T: Real> {
    pub compliant: u64,
    pub total: u64,
    pub rate: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ComplianceReport<T: Real> {
    /// Over every sentence.
    pub stage1: Rate<T>,
    /// Over sentences that reached stage 2; absent when none did.
    pub stage2: Option<Rate<T>>,
    /// Both stages pooled.
    pub overall: Rate<T>,
}

/// Run description carried into reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub backend: String,
    pub model: String,
    pub prompt_version: Option<PromptVersion>,
    pub k: Option<usize>,
    pub documents: usize,
    pub sentences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payloads: Option<PayloadStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvaluationReport<T: Real> {
    pub metadata: RunMetadata,
    pub stage1: Stage1Report<T>,
    pub stage2: Stage2Report<T>,
    pub compliance: ComplianceReport<T>,
}

fn key(doc_id: &str, sent_index: usize) -> String {
    format!("{doc_id}#{sent_index}")
}

/// Pairs every gold record with its prediction, or reports the coverage gap.
pub fn align<'a>(
    gold: &'a [SentenceRecord],
    predictions: &'a [PredictionRecord],
) -> Result<Vec<(&'a SentenceRecord, &'a PredictionRecord)>, MetricsError> {
    let mut by_key: HashMap<(&str, usize), &PredictionRecord> = HashMap::with_capacity(predictions.len());
    let mut duplicated = Vec::new();
    for p in predictions {
        if by_key.insert((p.doc_id.as_str(), p.sent_index), p).is_some() {
            duplicated.push(key(&p.doc_id, p.sent_index));
        }
    }
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(gold.len());
    let mut gold_keys = HashSet::with_capacity(gold.len());
    for g in gold {
        gold_keys.insert((g.doc_id.as_str(), g.sent_index));
        match by_key.get(&(g.doc_id.as_str(), g.sent_index)) {
            Some(p) => pairs.push((g, *p)),
            None => missing.push(key(&g.doc_id, g.sent_index)),
        }
    }
    let mut unexpected: Vec<String> = predictions
        .iter()
        .filter(|p| !gold_keys.contains(&(p.doc_id.as_str(), p.sent_index)))
        .map(|p| key(&p.doc_id, p.sent_index))
        .collect();
    if missing.is_empty() && unexpected.is_empty() && duplicated.is_empty() {
        return Ok(pairs);
    }
    missing.sort();
    unexpected.sort();
    unexpected.dedup();
    duplicated.sort();
    duplicated.dedup();
    Err(MetricsError::Coverage { missing, unexpected, duplicated })
}

/// Confusion counts for the Actionable class.
pub fn stage1_counts(pairs: &[(&SentenceRecord, &PredictionRecord)]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (g, p) in pairs {
        c.record(g.is_actionable(), p.stage1_verdict == Verdict::Actionable);
    }
    c
}

/// Per-category confusion counts in taxonomy order.
pub fn stage2_counts(pairs: &[(&SentenceRecord, &PredictionRecord)]) -> [ConfusionCounts; 7] {
    let mut counts = [ConfusionCounts::default(); 7];
    for (g, p) in pairs {
        for c in ActionCategory::ALL {
            counts[c.index()].record(g.true_labels.contains(&c), p.predicted_labels.contains(&c));
        }
    }
    counts
}

pub fn stage1_report<T: Real>(counts: ConfusionCounts) -> Stage1Report<T> {
    let actionable = ClassScore::new(counts);
    let non_actionable = ClassScore::new(counts.swapped());
    Stage1Report {
        binary_f1: actionable.score.f1,
        macro_precision: mean(&[actionable.score.precision, non_actionable.score.precision]),
        macro_recall: mean(&[actionable.score.recall, non_actionable.score.recall]),
        macro_f1: mean(&[actionable.score.f1, non_actionable.score.f1]),
        actionable,
        non_actionable,
    }
}

pub fn stage2_report<T: Real>(counts: [ConfusionCounts; 7]) -> Stage2Report<T> {
    let categories: Vec<CategoryScore<T>> = ActionCategory::ALL
        .into_iter()
        .map(|c| CategoryScore { category: c, counts: counts[c.index()], score: prf(&counts[c.index()]) })
        .collect();
    let pick = |f: fn(&Score<T>) -> T| categories.iter().map(|c| f(&c.score)).collect::<Vec<_>>();
    Stage2Report {
        macro_precision: mean(&pick(|s| s.precision)),
        macro_recall: mean(&pick(|s| s.recall)),
        macro_f1: mean(&pick(|s| s.f1)),
        categories,
    }
}

pub fn evaluate_stage1<T: Real>(
    gold: &[SentenceRecord],
    predictions: &[PredictionRecord],
) -> Result<Stage1Report<T>, MetricsError> {
    Ok(stage1_report(stage1_counts(&align(gold, predictions)?)))
}

/// End-to-end: a sentence the first stage missed counts as missing every
/// gold category.
pub fn evaluate_stage2<T: Real>(
    gold: &[SentenceRecord],
    predictions: &[PredictionRecord],
) -> Result<Stage2Report<T>, MetricsError> {
    Ok(stage2_report(stage2_counts(&align(gold, predictions)?)))
}

fn rate<T: Real>(compliant: u64, total: u64) -> Option<Rate<T>> {
    ratio(compliant, total).map(|rate| Rate { compliant, total, rate })
}

pub fn compliance_rate<T: Real>(predictions: &[PredictionRecord]) -> Result<ComplianceReport<T>, MetricsError> {
    let total1 = predictions.len() as u64;
    let ok1 = predictions.iter().filter(|p| p.stage1_compliant).count() as u64;
    let reached: Vec<bool> = predictions.iter().filter_map(|p| p.stage2_compliant).collect();
    let total2 = reached.len() as u64;
    let ok2 = reached.iter().filter(|c| **c).count() as u64;
    Ok(ComplianceReport {
        stage1: rate(ok1, total1).ok_or(MetricsError::UndefinedRate)?,
        stage2: rate(ok2, total2),
        overall: rate(ok1 + ok2, total1 + total2).ok_or(MetricsError::UndefinedRate)?,
    })
}

pub fn evaluate<T: Real>(
    gold: &[SentenceRecord],
    predictions: &[PredictionRecord],
    mut metadata: RunMetadata,
) -> Result<EvaluationReport<T>, MetricsError> {
    let pairs = align(gold, predictions)?;
    metadata.sentences = gold.len();
    metadata.documents = gold.iter().map(|g| g.doc_id.as_str()).collect::<HashSet<_>>().len();
    Ok(EvaluationReport {
        metadata,
        stage1: stage1_report(stage1_counts(&pairs)),
        stage2: stage2_report(stage2_counts(&pairs)),
        compliance: compliance_rate(predictions)?,
    })
}
