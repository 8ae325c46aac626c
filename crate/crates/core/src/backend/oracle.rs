//! Deterministic rule-based stand-in for a language model.
//!
//! The oracle reads the numbered sentences back out of a rendered prompt,
//! classifies each one with a keyword rule table, and answers in the exact
//! output schema the prompt asks for. Its output depends only on the prompt
//! text.

use std::sync::LazyLock;
use std::time::Instant;

use regex::Regex;
use serde::Serialize;

use super::{Backend, BackendError, BackendRequest, BackendResponse};
use crate::corpus::{label_strings, ActionCategory, LabelSet};
use crate::prompts::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleEffect {
    /// Adds a category to the sentence's label set.
    Label(ActionCategory),
    /// Forces the sentence to Non-Actionable regardless of other matches.
    Exclude,
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub name: &'static str,
    pub pattern: Regex,
    pub effect: RuleEffect,
}

#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Exclusions win; otherwise the verdict is Actionable iff some label
    /// rule fired.
    pub fn classify(&self, sentence: &str) -> (Verdict, LabelSet) {
        let mut labels = LabelSet::new();
        for rule in &self.rules {
            if !rule.pattern.is_match(sentence) {
                continue;
            }
            match rule.effect {
                RuleEffect::Exclude => return (Verdict::NonActionable, LabelSet::new()),
                RuleEffect::Label(c) => {
                    labels.insert(c);
                }
            }
        }
        let verdict = if labels.is_empty() {
            Verdict::NonActionable
        } else {
            Verdict::Actionable
        };
        (verdict, labels)
    }
}

fn rule(name: &'static str, pattern: &str, effect: RuleEffect) -> Rule {
    Rule {
        name,
        pattern: Regex::new(&format!("(?i){pattern}")).expect("rule pattern compiles"),
        effect,
    }
}

static RULES: LazyLock<RuleTable> = LazyLock::new(|| {
    use ActionCategory::*;
    use RuleEffect::*;
    RuleTable {
        rules: vec![
            rule("status-quo continuation", r"\bdischarged on\b", Exclude),
            rule("non-specific follow-up", r"\bfollow[- ]?up\b.*\bas needed\b", Exclude),
            rule(
                "hospital-course narrative",
                r"\b(was|were) (continued|started|given|treated|admitted|transfused|initiated|discontinued|found|noted)\b",
                Exclude,
            ),
            rule(
                "medication change",
                r"\b(hold|stop|stopped|start|resume|discontinue|increase|decrease|taper|refrain from)\b|\btake\b.*\b(mg|tablets?|pills?|doses?)\b",
                Label(Medication),
            ),
            rule(
                "laboratory follow-up",
                r"\brepeat (these |the )?(tests?|labs?)\b|\b(labs?|blood (work|tests?|draws?)|inr|cbc|chem(istry)? panel|creatinine|potassium)\b",
                Label(Lab),
            ),
            rule(
                "appointment or referral",
                r"\b(consult|consultation|appointment|visit|referral|referred to|follow[- ]?up with|see (dr|your|the))\b",
                Label(Appointment),
            ),
            rule(
                "imaging study",
                r"\b(x-?rays?|ct scan|ct of|mri|ultrasound|echocardiogram|imaging|chest film)\b",
                Label(Imaging),
            ),
            rule(
                "procedure care",
                r"\b(picc|dressing|sutures?|staples|drain|catheter|incision|stent|colonoscopy|biopsy|wound)\b",
                Label(Procedure),
            ),
            rule(
                "direct patient instruction",
                r"\b(avoid|do not (lift|drive|shower|bathe|swim)|weigh yourself|low[- ]salt|call your (doctor|physician)|return to the (ed|emergency)|please (stop|take|call|avoid|keep))\b",
                Label(PatientInstructions),
            ),
            rule(
                "contact information",
                r"\b(can be reached|phone number|fax)\b|\b\d{3}-\d{4}\b",
                Label(OtherContext),
            ),
        ],
    }
});

/// The oracle's rule table.
pub fn oracle_rules() -> &'static RuleTable {
    &RULES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    /// Prompt asks for `verdict` entries.
    Actionability,
    /// Prompt asks for `labels` entries (stage-2 or single-step).
    Categories,
}

/// The parts of a rendered prompt a backend double needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptView {
    pub kind: PromptKind,
    pub sentences: Vec<(usize, String)>,
}

static SENTENCE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?m)^\[(\d+)\] (".*")$"#).expect("static regex"));

impl PromptView {
    pub fn parse(prompt: &str) -> PromptView {
        let kind = if prompt.contains("\"verdict\"") {
            PromptKind::Actionability
        } else {
            PromptKind::Categories
        };
        let sentences = SENTENCE_LINE
            .captures_iter(prompt)
            .filter_map(|c| {
                let index = c[1].parse().ok()?;
                let text: String = serde_json::from_str(&c[2]).ok()?;
                Some((index, text))
            })
            .collect();
        PromptView { kind, sentences }
    }
}

#[derive(Serialize)]
struct VerdictEntry {
    index: usize,
    verdict: &'static str,
}

#[derive(Serialize)]
struct LabelEntry {
    index: usize,
    labels: Vec<&'static str>,
}

#[derive(Serialize)]
struct Results<T> {
    results: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct OracleBackend {
    id: String,
}

impl Default for OracleBackend {
    fn default() -> Self {
        OracleBackend { id: "oracle".into() }
    }
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Model output for a prompt, without transport metadata.
    pub fn answer(&self, prompt: &str) -> String {
        let view = PromptView::parse(prompt);
        let rules = oracle_rules();
        match view.kind {
            PromptKind::Actionability => {
                let results = view
                    .sentences
                    .iter()
                    .map(|(index, text)| VerdictEntry {
                        index: *index,
                        verdict: rules.classify(text).0.as_str(),
                    })
                    .collect();
                serde_json::to_string(&Results { results }).expect("serializes")
            }
            PromptKind::Categories => {
                let results = view
                    .sentences
                    .iter()
                    .map(|(index, text)| LabelEntry {
                        index: *index,
                        labels: label_strings(&rules.classify(text).1),
                    })
                    .collect();
                serde_json::to_string(&Results { results }).expect("serializes")
            }
        }
    }
}

impl Backend for OracleBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let text = self.answer(&request.user);
        Ok(BackendResponse {
            text,
            latency: started.elapsed(),
            attempts: 1,
            backend: self.id.clone(),
        })
    }
}
