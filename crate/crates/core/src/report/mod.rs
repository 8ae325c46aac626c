//! Error analysis and comparison tables.
//!
//! Every disagreement that a metric counts becomes exactly one [`ErrorCase`]:
//! stage-1 false positives and false negatives per sentence, stage-2
//! spurious and missed labels per (sentence, category), and compliance
//! failures per (sentence, stage). Totals therefore reconcile with the
//! confusion counts of the metrics module.

mod compare;
mod flags;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::io::{csv_cell, json_list_cell, labels_cell, quoted};
use crate::corpus::{ActionCategory, CorpusError, LabelSet, SentenceRecord};
use crate::metrics::{align, EvaluationReport, MetricsError};
use crate::pipeline::PredictionRecord;
use crate::prompts::Verdict;
use crate::scalar::Real;

pub use compare::{render_comparison, ComparisonCell, ComparisonColumn, ComparisonTable};
pub use flags::{flag_inconsistencies, structural_cue, write_flags_to, FlaggedSentence, InconsistencyFlag, FLAG_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Stage1Fp,
    Stage1Fn,
    Stage2CategoryConfusion,
    ComplianceFailure,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Stage1Fp => "stage1-FP",
            ErrorKind::Stage1Fn => "stage1-FN",
            ErrorKind::Stage2CategoryConfusion => "stage2-category-confusion",
            ErrorKind::ComplianceFailure => "compliance-failure",
        }
    }
}

/// Which side of a stage-2 disagreement a case records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Predicted but not in gold (a category false positive).
    Spurious,
    /// In gold but not predicted (a category false negative).
    Missed,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Spurious => "spurious",
            Direction::Missed => "missed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCase {
    pub doc_id: String,
    pub sent_index: usize,
    pub sentence: String,
    pub gold_labels: LabelSet,
    pub predicted_labels: LabelSet,
    pub verdict: Verdict,
    pub kind: ErrorKind,
    /// Stage-2 cases only.
    pub category: Option<ActionCategory>,
    pub direction: Option<Direction>,
    /// Compliance cases only: 1 or 2.
    pub stage: Option<u8>,
    /// Categories on the other side of the same sentence's disagreement:
    /// for a missed category, what was predicted instead, and vice versa.
    pub confused_with: LabelSet,
    pub flag: Option<InconsistencyFlag>,
}

/// Enumerates every metric-relevant disagreement, in gold order.
pub fn collect_errors(
    gold: &[SentenceRecord],
    predictions: &[PredictionRecord],
) -> Result<Vec<ErrorCase>, MetricsError> {
    let mut out = Vec::new();
    for (g, p) in align(gold, predictions)? {
        let base = |kind| ErrorCase {
            doc_id: g.doc_id.clone(),
            sent_index: g.sent_index,
            sentence: g.text(),
            gold_labels: g.true_labels.clone(),
            predicted_labels: p.predicted_labels.clone(),
            verdict: p.stage1_verdict,
            kind,
            category: None,
            direction: None,
            stage: None,
            confused_with: LabelSet::new(),
            flag: None,
        };
        let predicted_actionable = p.stage1_verdict == Verdict::Actionable;
        match (g.is_actionable(), predicted_actionable) {
            (false, true) => out.push(base(ErrorKind::Stage1Fp)),
            (true, false) => out.push(base(ErrorKind::Stage1Fn)),
            _ => {}
        }
        let missed: LabelSet = g.true_labels.difference(&p.predicted_labels).copied().collect();
        let spurious: LabelSet = p.predicted_labels.difference(&g.true_labels).copied().collect();
        for (set, other, direction) in [(&missed, &spurious, Direction::Missed), (&spurious, &missed, Direction::Spurious)] {
            for &c in set {
                let mut case = base(ErrorKind::Stage2CategoryConfusion);
                case.category = Some(c);
                case.direction = Some(direction);
                case.confused_with = other.clone();
                out.push(case);
            }
        }
        if !p.stage1_compliant {
            let mut case = base(ErrorKind::ComplianceFailure);
            case.stage = Some(1);
            out.push(case);
        }
        if p.stage2_compliant == Some(false) {
            let mut case = base(ErrorKind::ComplianceFailure);
            case.stage = Some(2);
            out.push(case);
        }
    }
    Ok(out)
}

/// Copies inconsistency flags onto the error cases of flagged sentences.
pub fn attach_flags(cases: &mut [ErrorCase], flags: &[FlaggedSentence]) {
    let by_key: HashMap<(&str, usize), InconsistencyFlag> =
        flags.iter().map(|f| ((f.doc_id.as_str(), f.sent_index), f.flag)).collect();
    for case in cases {
        case.flag = by_key.get(&(case.doc_id.as_str(), case.sent_index)).copied();
    }
}

/// Case counts, shaped like the confusion counts they must match.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub stage1_fp: u64,
    pub stage1_fn: u64,
    /// Taxonomy order.
    pub stage2_spurious: [u64; 7],
    pub stage2_missed: [u64; 7],
    pub stage1_noncompliant: u64,
    pub stage2_noncompliant: u64,
    /// (gold category, predicted category) pairs on the same sentence.
    pub confusion_pairs: BTreeMap<String, u64>,
}

impl ErrorSummary {
    pub fn from_cases(cases: &[ErrorCase]) -> ErrorSummary {
        let mut s = ErrorSummary::default();
        for c in cases {
            match (c.kind, c.category, c.direction, c.stage) {
                (ErrorKind::Stage1Fp, ..) => s.stage1_fp += 1,
                (ErrorKind::Stage1Fn, ..) => s.stage1_fn += 1,
                (ErrorKind::Stage2CategoryConfusion, Some(cat), Some(Direction::Spurious), _) => {
                    s.stage2_spurious[cat.index()] += 1
                }
                (ErrorKind::Stage2CategoryConfusion, Some(cat), Some(Direction::Missed), _) => {
                    s.stage2_missed[cat.index()] += 1;
                    for other in &c.confused_with {
                        *s.confusion_pairs.entry(format!("{cat} -> {other}")).or_default() += 1;
                    }
                }
                (ErrorKind::ComplianceFailure, _, _, Some(1)) => s.stage1_noncompliant += 1,
                (ErrorKind::ComplianceFailure, _, _, Some(2)) => s.stage2_noncompliant += 1,
                _ => {}
            }
        }
        s
    }

    /// Mismatches against a report's confusion and compliance counts; empty
    /// when everything reconciles.
    pub fn reconcile<T: Real>(&self, report: &EvaluationReport<T>) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: String, ours: u64, theirs: u64| {
            if ours != theirs {
                out.push(format!("{name}: {ours} error case(s) vs {theirs} counted"));
            }
        };
        let a = report.stage1.actionable.counts;
        check("stage-1 FP".into(), self.stage1_fp, a.fp);
        check("stage-1 FN".into(), self.stage1_fn, a.fn_);
        for c in &report.stage2.categories {
            check(format!("{} FP", c.category), self.stage2_spurious[c.category.index()], c.counts.fp);
            check(format!("{} FN", c.category), self.stage2_missed[c.category.index()], c.counts.fn_);
        }
        let r1 = report.compliance.stage1;
        check("stage-1 non-compliant".into(), self.stage1_noncompliant, r1.total - r1.compliant);
        let r2 = report.compliance.stage2.map(|r| r.total - r.compliant).unwrap_or(0);
        check("stage-2 non-compliant".into(), self.stage2_noncompliant, r2);
        out
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::from("# Error summary\n\n| Kind | Count |\n|---|---|\n");
        out.push_str(&format!("| stage1-FP | {} |\n| stage1-FN | {} |\n", self.stage1_fp, self.stage1_fn));
        out.push_str(&format!(
            "| compliance-failure (stage 1) | {} |\n| compliance-failure (stage 2) | {} |\n",
            self.stage1_noncompliant, self.stage2_noncompliant
        ));
        out.push_str("\n## Stage-2 category errors\n\n| Action category | Spurious | Missed |\n|---|---|---|\n");
        for c in ActionCategory::ALL {
            out.push_str(&format!(
                "| {c} | {} | {} |\n",
                self.stage2_spurious[c.index()],
                self.stage2_missed[c.index()]
            ));
        }
        out.push_str("\n## Category confusions (gold -> predicted)\n\n");
        if self.confusion_pairs.is_empty() {
            out.push_str("None.\n");
        } else {
            let mut pairs: Vec<(&String, &u64)> = self.confusion_pairs.iter().collect();
            pairs.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
            out.push_str("| Pair | Count |\n|---|---|\n");
            for (pair, n) in pairs {
                out.push_str(&format!("| {pair} | {n} |\n"));
            }
        }
        out
    }
}

pub const ERROR_HEADER: &str =
    "doc_id,sent_index,kind,category,direction,stage,sentence,gold_labels,predicted_labels,confused_with,flag";

pub fn write_errors_to<W: Write>(cases: &[ErrorCase], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{ERROR_HEADER}")?;
    for c in cases {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_cell(&c.doc_id),
            c.sent_index,
            c.kind.as_str(),
            c.category.map(|x| csv_cell(x.as_str())).unwrap_or_default(),
            c.direction.map(Direction::as_str).unwrap_or_default(),
            c.stage.map(|s| s.to_string()).unwrap_or_default(),
            quoted(&c.sentence),
            labels_cell(&c.gold_labels),
            labels_cell(&c.predicted_labels),
            json_list_cell(&crate::corpus::label_strings(&c.confused_with)),
            c.flag.map(InconsistencyFlag::as_str).unwrap_or_default(),
        )?;
    }
    out.flush()
}

pub fn write_errors(cases: &[ErrorCase], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_errors_to(cases, std::io::BufWriter::new(file)).map_err(|e| CorpusError::io(path, e))
}
