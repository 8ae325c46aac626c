//! Structured-output parsing. Compliance failures are data: every expected
//! index gets an entry, and anything unusable is marked non-compliant.

use std::collections::{BTreeMap, HashMap};

use serde_json::Value;

use crate::corpus::{normalize, ActionCategory, LabelSet};
use crate::prompts::Verdict;

/// Stage-1 decision for one in-batch index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOneVerdict {
    pub index: usize,
    pub verdict: Verdict,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOneParse {
    /// One verdict per index `0..len`, in index order.
    pub verdicts: Vec<StageOneVerdict>,
    /// The payload was a JSON object with a `results` array.
    pub payload_ok: bool,
}

impl StageOneParse {
    pub fn fully_compliant(&self) -> bool {
        self.payload_ok && self.verdicts.iter().all(|v| v.compliant)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTwoEntry {
    pub index: usize,
    pub labels: LabelSet,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTwoParse {
    /// One entry per requested index, in ascending index order.
    pub entries: Vec<StageTwoEntry>,
    pub payload_ok: bool,
}

impl StageTwoParse {
    pub fn fully_compliant(&self) -> bool {
        self.payload_ok && self.entries.iter().all(|e| e.compliant)
    }

    pub fn get(&self, index: usize) -> Option<&StageTwoEntry> {
        self.entries.iter().find(|e| e.index == index)
    }
}

/// Strips surrounding whitespace and one markdown code fence, with or
/// without a language tag.
pub fn unwrap_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    match body.find('\n') {
        Some(nl) if body[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => body[nl + 1..].trim(),
        _ => body.trim(),
    }
}

/// The `results` entries keyed by index. `None` when the payload is not a
/// JSON object with a `results` array. Entries without an integer index are
/// dropped; indices that appear more than once map to `None`.
fn entries_by_index(raw: &str) -> Option<HashMap<u64, Option<serde_json::Map<String, Value>>>> {
    let value: Value = serde_json::from_str(unwrap_fence(raw)).ok()?;
    let results = value.as_object()?.get("results")?.as_array()?;
    let mut map: HashMap<u64, Option<serde_json::Map<String, Value>>> = HashMap::new();
    for entry in results {
        let Some(obj) = entry.as_object() else { continue };
        let Some(index) = obj.get("index").and_then(Value::as_u64) else { continue };
        map.entry(index)
            .and_modify(|slot| *slot = None)
            .or_insert_with(|| Some(obj.clone()));
    }
    Some(map)
}

/// Parses a stage-1 payload for a batch of `len` sentences.
pub fn parse_stage1(raw: &str, len: usize) -> StageOneParse {
    let entries = entries_by_index(raw);
    let payload_ok = entries.is_some();
    let verdicts = (0..len)
        .map(|index| {
            let verdict = entries
                .as_ref()
                .and_then(|m| m.get(&(index as u64)))
                .and_then(Option::as_ref)
                .and_then(|obj| obj.get("verdict"))
                .and_then(Value::as_str)
                .and_then(Verdict::parse_normalized);
            StageOneVerdict {
                index,
                verdict: verdict.unwrap_or(Verdict::NonActionable),
                compliant: verdict.is_some(),
            }
        })
        .collect();
    StageOneParse { verdicts, payload_ok }
}

static ALIASES: &[(&str, ActionCategory)] = &[
    ("appointment", ActionCategory::Appointment),
    ("appointment related", ActionCategory::Appointment),
    ("lab", ActionCategory::Lab),
    ("lab related", ActionCategory::Lab),
    ("laboratory related followup", ActionCategory::Lab),
    ("medication", ActionCategory::Medication),
    ("medication related", ActionCategory::Medication),
    ("imaging", ActionCategory::Imaging),
    ("imaging related", ActionCategory::Imaging),
    ("procedure", ActionCategory::Procedure),
    ("procedure related", ActionCategory::Procedure),
    ("patient instructions", ActionCategory::PatientInstructions),
    ("case specific instructions", ActionCategory::PatientInstructions),
    ("case specific instructions for the patient", ActionCategory::PatientInstructions),
    ("other", ActionCategory::OtherContext),
    ("other helpful contextual info", ActionCategory::OtherContext),
];

/// Maps a model-emitted label to a category: normalized exact match, with
/// `follow up` read as `followup`, then the fixed alias table.
pub fn resolve_label(label: &str) -> Option<ActionCategory> {
    let key = normalize(label).replace("follow up", "followup");
    ActionCategory::ALL
        .into_iter()
        .find(|c| c.key() == key)
        .or_else(|| ALIASES.iter().find(|(alias, _)| *alias == key).map(|(_, c)| *c))
}

/// Parses a stage-2 payload for the requested in-batch indices.
pub fn parse_stage2(raw: &str, indices: &[usize]) -> StageTwoParse {
    let entries = entries_by_index(raw);
    let payload_ok = entries.is_some();
    let mut out = BTreeMap::new();
    for &index in indices {
        let labels = entries
            .as_ref()
            .and_then(|m| m.get(&(index as u64)))
            .and_then(Option::as_ref)
            .and_then(|obj| obj.get("labels"))
            .and_then(Value::as_array);
        let entry = match labels {
            None => StageTwoEntry { index, labels: LabelSet::new(), compliant: false },
            Some(items) => {
                let mut set = LabelSet::new();
                let mut compliant = true;
                for item in items {
                    match item.as_str().and_then(resolve_label) {
                        Some(c) => {
                            set.insert(c);
                        }
                        None => compliant = false,
                    }
                }
                StageTwoEntry { index, labels: set, compliant }
            }
        };
        out.insert(index, entry);
    }
    StageTwoParse { entries: out.into_values().collect(), payload_ok }
}
