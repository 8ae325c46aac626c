//! Advisory annotation-consistency heuristics. They read gold labels and
//! never change them.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::io::{csv_cell, labels_cell};
use crate::corpus::{LabelSet, SentenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InconsistencyFlag {
    /// Sentences with the same structural cue in one document carry
    /// different labels.
    StructuralLabelRule,
    /// A labeled sentence that only narrates a completed action.
    ImplicitPastTenseAction,
    /// A section header is the last sentence of its batch, so its content
    /// starts the next batch.
    SectionFragmentation,
}

impl InconsistencyFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            InconsistencyFlag::StructuralLabelRule => "structural-label-rule",
            InconsistencyFlag::ImplicitPastTenseAction => "implicit-past-tense-action",
            InconsistencyFlag::SectionFragmentation => "section-fragmentation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedSentence {
    pub doc_id: String,
    pub sent_index: usize,
    pub sentence: String,
    pub labels: LabelSet,
    pub flag: InconsistencyFlag,
    pub note: String,
}

static CUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(was|were)\s+(continued|started|restarted|changed|switched|maintained|placed|transitioned)\s+(on|to)\b")
        .expect("static regex")
});

static PAST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(was|were|had been|has been)\s+([a-z]+ed|begun|given|taken|done|seen|held)\b").expect("static regex")
});

static FUTURE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(will|please|should|must|needs?|to be|follow[- ]?up|call|return|continue to|instructed|advised|scheduled|appointment|until|after discharge|upon discharge)\b",
    )
    .expect("static regex")
});

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(discharge medications?|discharge instructions?|follow[- ]?up instructions?|medications on discharge|hospital course|discharge diagnos[ie]s)\s*:?$")
        .expect("static regex")
});

/// The shared grammatical cue of a sentence, such as `was continued on`.
pub fn structural_cue(text: &str) -> Option<String> {
    CUE.find(text).map(|m| m.as_str().to_lowercase().split_whitespace().collect::<Vec<_>>().join(" "))
}

fn is_header(text: &str) -> bool {
    let t = text.trim();
    HEADER.is_match(t) || (t.ends_with(':') && t.split_whitespace().count() <= 5)
}

fn flagged(r: &SentenceRecord, flag: InconsistencyFlag, note: String) -> FlaggedSentence {
    FlaggedSentence {
        doc_id: r.doc_id.clone(),
        sent_index: r.sent_index,
        sentence: r.text(),
        labels: r.true_labels.clone(),
        flag,
        note,
    }
}

/// Flags suspicious gold annotations. Records must be canonically sorted.
/// Fragmentation is only checked when a batch size is given. Output is
/// sorted by document, sentence and flag.
pub fn flag_inconsistencies(gold: &[SentenceRecord], k: Option<usize>) -> Vec<FlaggedSentence> {
    let mut out = Vec::new();
    for doc in gold.chunk_by(|a, b| a.doc_id == b.doc_id) {
        let mut groups: BTreeMap<String, Vec<&SentenceRecord>> = BTreeMap::new();
        for r in doc {
            let text = r.text();
            if let Some(cue) = structural_cue(&text) {
                groups.entry(cue).or_default().push(r);
            }
            if r.is_actionable() && PAST.is_match(&text) && !FUTURE.is_match(&text) {
                out.push(flagged(r, InconsistencyFlag::ImplicitPastTenseAction, "labeled, but phrased as a completed action".into()));
            }
        }
        for (cue, members) in groups {
            let labeled = members.iter().filter(|r| r.is_actionable()).count();
            if labeled == 0 || labeled == members.len() {
                continue;
            }
            let indices: Vec<String> = members.iter().map(|r| r.sent_index.to_string()).collect();
            for r in members {
                let note = format!("`{cue}` appears in sentences {} with divergent labels", indices.join(", "));
                out.push(flagged(r, InconsistencyFlag::StructuralLabelRule, note));
            }
        }
        if let Some(k) = k.filter(|&k| k > 0) {
            for (pos, r) in doc.iter().enumerate() {
                if pos % k == k - 1 && pos + 1 < doc.len() && is_header(&r.text()) {
                    let note = format!("header closes batch {}; its content starts batch {}", pos / k + 1, pos / k + 2);
                    out.push(flagged(r, InconsistencyFlag::SectionFragmentation, note));
                }
            }
        }
    }
    out.sort_by(|a, b| (&a.doc_id, a.sent_index, a.flag).cmp(&(&b.doc_id, b.sent_index, b.flag)));
    out
}

pub const FLAG_HEADER: &str = "doc_id,sent_index,sentence,true_labels,flag,note";

pub fn write_flags_to<W: Write>(flags: &[FlaggedSentence], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{FLAG_HEADER}")?;
    for f in flags {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_cell(&f.doc_id),
            f.sent_index,
            csv_cell(&f.sentence),
            labels_cell(&f.labels),
            f.flag.as_str(),
            csv_cell(&f.note)
        )?;
    }
    out.flush()
}
