use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The closed set of post-discharge action categories.
///
/// Declaration order is the canonical taxonomy order; label sets iterate in
/// this order, which keeps every serialized artifact stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionCategory {
    Appointment,
    Lab,
    Medication,
    Imaging,
    Procedure,
    PatientInstructions,
    OtherContext,
}

/// A sentence-level label set, ordered by taxonomy position.
pub type LabelSet = BTreeSet<ActionCategory>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action category `{0}`")]
pub struct UnknownCategory(pub String);

impl ActionCategory {
    pub const ALL: [ActionCategory; 7] = [
        ActionCategory::Appointment,
        ActionCategory::Lab,
        ActionCategory::Medication,
        ActionCategory::Imaging,
        ActionCategory::Procedure,
        ActionCategory::PatientInstructions,
        ActionCategory::OtherContext,
    ];

    /// Canonical label string, as written in interchange files and expected
    /// from models.
    pub fn as_str(self) -> &'static str {
        match self {
            ActionCategory::Appointment => "Appointment-related followup",
            ActionCategory::Lab => "Lab-related followup",
            ActionCategory::Medication => "Medication-related followup",
            ActionCategory::Imaging => "Imaging-related followup",
            ActionCategory::Procedure => "Procedure-related followup",
            ActionCategory::PatientInstructions => "Case-specific instructions for patient",
            ActionCategory::OtherContext => "Other helpful contextual information",
        }
    }

    /// Category definition as given in the annotation guideline table.
    pub fn definition(self) -> &'static str {
        match self {
            ActionCategory::Appointment => {
                "Instructions to schedule or attend a clinical visit, consultation, or referral."
            }
            ActionCategory::Lab => "Instructions to order, repeat, or review laboratory tests.",
            ActionCategory::Medication => {
                "Instructions to start, stop, change, hold, or adjust medications."
            }
            ActionCategory::Imaging => {
                "Instructions to schedule or obtain diagnostic imaging studies."
            }
            ActionCategory::Procedure => {
                "Instructions related to medical or surgical procedures and their care."
            }
            ActionCategory::PatientInstructions => "Direct care instructions given to the patient.",
            ActionCategory::OtherContext => {
                "Clinically useful information that supports follow-up or care coordination."
            }
        }
    }

    /// Normalized lookup key of the canonical label.
    pub fn key(self) -> String {
        normalize(self.as_str())
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ActionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionCategory {
    type Err = UnknownCategory;

    /// Accepts a canonical label up to case, punctuation and whitespace.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize(s);
        ActionCategory::ALL
            .into_iter()
            .find(|c| c.key() == key)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

impl Serialize for ActionCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ActionCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Lowercase, replace every non-alphanumeric character by a space, and
/// collapse runs of whitespace. Idempotent.
pub fn normalize(s: &str) -> String {
    let mapped: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Display strings of a label set, in taxonomy order.
pub fn label_strings(labels: &LabelSet) -> Vec<&'static str> {
    labels.iter().map(|c| c.as_str()).collect()
}
