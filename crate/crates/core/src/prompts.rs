//! Versioned prompt templates for the two-stage chain and the single-step
//! baselines.
//!
//! Each (version, stage) pair is one text file with `{{sentences}}`,
//! `{{definitions}}` and `{{examples}}` placeholders. The built-in set is
//! compiled in from `templates/`; [`TemplateSet::load`] overrides any subset
//! from a directory so prompts can be revised without a rebuild.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::batcher::ContextBatch;
use crate::corpus::{normalize, ActionCategory, LabelSet};

pub const SYSTEM_PROMPT: &str = "You are a careful clinical information extraction assistant. \
Respond with a single JSON object and nothing else.";

/// Appended to a prompt when the first response was not usable.
pub const REPAIR_INSTRUCTION: &str = "\n\nYOUR PREVIOUS RESPONSE COULD NOT BE USED.\n\
Return ONLY a JSON object in the output format above, with exactly one entry for every listed index \
and no markdown fences.";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt version {version} cannot render the {stage} prompt")]
    VersionMismatch { version: PromptVersion, stage: Stage },
    #[error("index {index} is outside the batch of {len} sentences")]
    IndexOutOfBatch { index: usize, len: usize },
    #[error("template {path}: {detail}")]
    Template { path: PathBuf, detail: String },
    #[error("unknown prompt version `{0}` (expected v1..v4)")]
    UnknownVersion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptVersion {
    V1,
    V2,
    V3,
    V4,
}

/// Which features a prompt version carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PromptFeatures {
    pub has_category_definitions: bool,
    pub has_few_shot_examples: bool,
    pub two_stage: bool,
    pub has_inclusion_exclusion_rules: bool,
    pub implicit_action_rule: bool,
    pub multi_label_rule: bool,
}

impl PromptVersion {
    pub const ALL: [PromptVersion; 4] = [Self::V1, Self::V2, Self::V3, Self::V4];

    pub fn features(self) -> PromptFeatures {
        let at_least = |v: PromptVersion| self >= v;
        PromptFeatures {
            has_category_definitions: at_least(Self::V2),
            has_few_shot_examples: at_least(Self::V2),
            two_stage: at_least(Self::V3),
            has_inclusion_exclusion_rules: at_least(Self::V3),
            implicit_action_rule: at_least(Self::V4),
            multi_label_rule: at_least(Self::V4),
        }
    }

    pub fn is_two_stage(self) -> bool {
        self.features().two_stage
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::V1 => "v1",
            Self::V2 => "v2",
            Self::V3 => "v3",
            Self::V4 => "v4",
        }
    }
}

impl fmt::Display for PromptVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVersion {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v1" => Ok(Self::V1),
            "v2" => Ok(Self::V2),
            "v3" => Ok(Self::V3),
            "v4" => Ok(Self::V4),
            _ => Err(PromptError::UnknownVersion(s.to_string())),
        }
    }
}

impl Serialize for PromptVersion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PromptVersion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Single,
    Actionability,
    Category,
}

impl Stage {
    fn file_suffix(self) -> &'static str {
        match self {
            Stage::Single => "single",
            Stage::Actionability => "stage1",
            Stage::Category => "stage2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Single => "single-step",
            Stage::Actionability => "stage-1",
            Stage::Category => "stage-2",
        })
    }
}

/// Stage-1 decision for one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Actionable,
    NonActionable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Actionable => "Actionable",
            Verdict::NonActionable => "Non-Actionable",
        }
    }

    /// Matches `Actionable` / `Non-Actionable` after normalization.
    pub fn parse_normalized(s: &str) -> Option<Verdict> {
        match normalize(s).as_str() {
            "actionable" => Some(Verdict::Actionable),
            "non actionable" => Some(Verdict::NonActionable),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Verdict::parse_normalized(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown verdict `{s}`")))
    }
}

/// A worked example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    pub sentence: &'static str,
    pub verdict: Verdict,
    pub labels: LabelSet,
    pub rationale: &'static str,
}

impl FewShotExample {
    fn new(
        sentence: &'static str,
        labels: &[ActionCategory],
        rationale: &'static str,
    ) -> Self {
        let verdict = if labels.is_empty() {
            Verdict::NonActionable
        } else {
            Verdict::Actionable
        };
        FewShotExample {
            sentence,
            verdict,
            labels: labels.iter().copied().collect(),
            rationale,
        }
    }
}

/// The six reference sentences with their stage-1 and stage-2 decisions.
pub fn reference_examples() -> Vec<FewShotExample> {
    use ActionCategory::*;
    vec![
        FewShotExample::new(
            "The patient was instructed to hold ASA and refrain from NSAIDs for 2 weeks.",
            &[Medication],
            "Explicit medication change/hold instruction",
        ),
        FewShotExample::new(
            "Discharged on Atorvastatin 40 mg daily and Aspirin 81 mg.",
            &[],
            "Standard continuation of existing medications",
        ),
        FewShotExample::new(
            "The patient requires a neurology consult at XYZ for evaluation.",
            &[Appointment],
            "Explicit specialist referral",
        ),
        FewShotExample::new(
            "Follow up with your primary care provider as needed for any new concerns.",
            &[],
            "Non-specific, conditional guidance without a concrete action",
        ),
        FewShotExample::new(
            "We ask that the patient's family physician repeat these tests in 2 weeks to ensure resolution.",
            &[Lab],
            "Explicit laboratory test follow-up",
        ),
        FewShotExample::new(
            "Please arrive at 11 am for X-rays before your visit.",
            &[Appointment, Imaging],
            "Multiple explicit procedural actions",
        ),
    ]
}

/// Additional single-category examples so that every category has one.
fn supplementary_examples() -> Vec<FewShotExample> {
    use ActionCategory::*;
    vec![
        FewShotExample::new(
            "Your PICC line should be removed by the visiting nurse after the last antibiotic dose.",
            &[Procedure],
            "Explicit procedural care step",
        ),
        FewShotExample::new(
            "Do not lift anything heavier than 10 pounds for six weeks.",
            &[PatientInstructions],
            "Direct care instruction to the patient",
        ),
        FewShotExample::new(
            "The cardiology clinic can be reached at 555-0100 with questions about the device.",
            &[OtherContext],
            "Contact information supporting care coordination",
        ),
    ]
}

/// One example per category (first match in reference order), then the
/// non-actionable reference rows.
pub fn per_category_examples() -> Vec<FewShotExample> {
    let pool: Vec<FewShotExample> = reference_examples()
        .into_iter()
        .chain(supplementary_examples())
        .collect();
    let mut out: Vec<FewShotExample> = Vec::new();
    for cat in ActionCategory::ALL {
        if let Some(ex) = pool.iter().find(|e| e.labels.contains(&cat)) {
            if !out.contains(ex) {
                out.push(ex.clone());
            }
        }
    }
    out.extend(pool.into_iter().filter(|e| e.verdict == Verdict::NonActionable));
    out
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn labels_json(labels: &LabelSet) -> String {
    serde_json::to_string(&crate::corpus::label_strings(labels)).expect("labels serialize")
}

fn render_definitions(version: PromptVersion) -> String {
    let with_defs = version.features().has_category_definitions;
    ActionCategory::ALL
        .iter()
        .map(|c| {
            if with_defs {
                format!("- {}: {}", c.as_str(), c.definition())
            } else {
                format!("- {}", c.as_str())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_examples(version: PromptVersion, stage: Stage) -> String {
    if !version.features().has_few_shot_examples {
        return String::new();
    }
    let mut blocks = Vec::new();
    match stage {
        Stage::Actionability => {
            for ex in reference_examples() {
                blocks.push(format!(
                    "Sentence: {}\nVerdict: {} ({})",
                    quote(ex.sentence),
                    ex.verdict,
                    ex.rationale
                ));
            }
        }
        Stage::Category => {
            let mut examples = reference_examples();
            examples.extend(supplementary_examples());
            for ex in examples {
                let line = if ex.verdict == Verdict::Actionable {
                    format!("Labels: {} ({})", labels_json(&ex.labels), ex.rationale)
                } else {
                    format!("Not a follow-up action; assign no category ({})", ex.rationale)
                };
                blocks.push(format!("Sentence: {}\n{line}", quote(ex.sentence)));
            }
        }
        Stage::Single => {
            for ex in per_category_examples() {
                blocks.push(format!(
                    "Sentence: {}\nLabels: {} ({})",
                    quote(ex.sentence),
                    labels_json(&ex.labels),
                    ex.rationale
                ));
            }
        }
    }
    blocks.join("\n\n")
}

/// One line per sentence: the in-batch index in brackets, then the sentence
/// as a JSON string literal so quotes and braces in clinical text cannot be
/// confused with the output schema.
fn render_sentences<'a>(items: impl IntoIterator<Item = (usize, &'a crate::corpus::SentenceRecord)>) -> String {
    items
        .into_iter()
        .map(|(i, r)| format!("[{i}] {}", quote(&r.text())))
        .collect::<Vec<_>>()
        .join("\n")
}

const PLACEHOLDERS: [&str; 3] = ["sentences", "definitions", "examples"];

/// Replaces `{{name}}` tokens in one left-to-right pass; substituted text is
/// never rescanned.
fn substitute(template: &str, values: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len() + 1024);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) if values.contains_key(&after[..close]) => {
                out.push_str(&values[&after[..close]]);
                rest = &after[close + 2..];
            }
            _ => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn template_errors(text: &str) -> Option<String> {
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after.find("}}")?;
        let name = &after[..close];
        if !PLACEHOLDERS.contains(&name) {
            return Some(format!("unknown placeholder `{{{{{name}}}}}`"));
        }
        rest = &after[close + 2..];
    }
    if !text.contains("{{sentences}}") {
        return Some("missing `{{sentences}}` placeholder".into());
    }
    None
}

fn valid_pairs() -> impl Iterator<Item = (PromptVersion, Stage)> {
    PromptVersion::ALL.into_iter().flat_map(|v| {
        let stages: &[Stage] = if v.is_two_stage() {
            &[Stage::Actionability, Stage::Category]
        } else {
            &[Stage::Single]
        };
        stages.iter().map(move |&s| (v, s))
    })
}

pub fn template_file_name(version: PromptVersion, stage: Stage) -> String {
    format!("{}_{}.txt", version, stage.file_suffix())
}

/// Loaded prompt templates, one per valid (version, stage) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<(PromptVersion, Stage), String>,
}

static BUILTIN: LazyLock<TemplateSet> = LazyLock::new(|| {
    let raw = [
        ((PromptVersion::V1, Stage::Single), include_str!("../templates/v1_single.txt")),
        ((PromptVersion::V2, Stage::Single), include_str!("../templates/v2_single.txt")),
        ((PromptVersion::V3, Stage::Actionability), include_str!("../templates/v3_stage1.txt")),
        ((PromptVersion::V3, Stage::Category), include_str!("../templates/v3_stage2.txt")),
        ((PromptVersion::V4, Stage::Actionability), include_str!("../templates/v4_stage1.txt")),
        ((PromptVersion::V4, Stage::Category), include_str!("../templates/v4_stage2.txt")),
    ];
    TemplateSet {
        templates: raw.into_iter().map(|(k, v)| (k, v.to_string())).collect(),
    }
});

impl TemplateSet {
    pub fn builtin() -> &'static TemplateSet {
        &BUILTIN
    }

    /// Reads `<version>_<stage>.txt` files from `dir`; missing files fall back
    /// to the built-in template.
    pub fn load(dir: &Path) -> Result<TemplateSet, PromptError> {
        let mut set = TemplateSet::builtin().clone();
        for (version, stage) in valid_pairs() {
            let path = dir.join(template_file_name(version, stage));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Template {
                path: path.clone(),
                detail: e.to_string(),
            })?;
            if let Some(detail) = template_errors(&text) {
                return Err(PromptError::Template { path, detail });
            }
            set.templates.insert((version, stage), text);
        }
        Ok(set)
    }

    pub fn template(&self, version: PromptVersion, stage: Stage) -> Option<&str> {
        self.templates.get(&(version, stage)).map(String::as_str)
    }

    fn render(
        &self,
        version: PromptVersion,
        stage: Stage,
        sentences: String,
    ) -> Result<String, PromptError> {
        let template = self
            .template(version, stage)
            .ok_or(PromptError::VersionMismatch { version, stage })?;
        let values = BTreeMap::from([
            ("sentences", sentences),
            ("definitions", render_definitions(version)),
            ("examples", render_examples(version, stage)),
        ]);
        Ok(substitute(template, &values))
    }

    /// Actionability prompt over every sentence of the batch.
    pub fn render_stage1(&self, batch: &ContextBatch<'_>, version: PromptVersion) -> Result<String, PromptError> {
        if !version.is_two_stage() {
            return Err(PromptError::VersionMismatch { version, stage: Stage::Actionability });
        }
        self.render(version, Stage::Actionability, render_sentences(batch.sentences.iter().enumerate()))
    }

    /// Category prompt over the actionable subset. `Ok(None)` means there is
    /// nothing to classify and no model call should be made.
    pub fn render_stage2(
        &self,
        batch: &ContextBatch<'_>,
        actionable: &[usize],
        version: PromptVersion,
    ) -> Result<Option<String>, PromptError> {
        if !version.is_two_stage() {
            return Err(PromptError::VersionMismatch { version, stage: Stage::Category });
        }
        if let Some(&index) = actionable.iter().find(|&&i| i >= batch.len()) {
            return Err(PromptError::IndexOutOfBatch { index, len: batch.len() });
        }
        if actionable.is_empty() {
            return Ok(None);
        }
        let mut indices = actionable.to_vec();
        indices.sort_unstable();
        indices.dedup();
        let sentences = render_sentences(indices.iter().map(|&i| (i, &batch.sentences[i])));
        self.render(version, Stage::Category, sentences).map(Some)
    }

    /// Single-step category prompt (v1, v2) over every sentence.
    pub fn render_single_step(&self, batch: &ContextBatch<'_>, version: PromptVersion) -> Result<String, PromptError> {
        if version.is_two_stage() {
            return Err(PromptError::VersionMismatch { version, stage: Stage::Single });
        }
        self.render(version, Stage::Single, render_sentences(batch.sentences.iter().enumerate()))
    }
}

pub fn render_stage1(batch: &ContextBatch<'_>, version: PromptVersion) -> Result<String, PromptError> {
    TemplateSet::builtin().render_stage1(batch, version)
}

pub fn render_stage2(
    batch: &ContextBatch<'_>,
    actionable: &[usize],
    version: PromptVersion,
) -> Result<Option<String>, PromptError> {
    TemplateSet::builtin().render_stage2(batch, actionable, version)
}

pub fn render_single_step(batch: &ContextBatch<'_>, version: PromptVersion) -> Result<String, PromptError> {
    TemplateSet::builtin().render_single_step(batch, version)
}
