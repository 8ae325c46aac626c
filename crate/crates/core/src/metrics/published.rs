//! Published scores for comparison tables. Reported, not reproduced: these
//! numbers are never recomputed or altered.
//!
//! Category arrays are in taxonomy order (see [`ActionCategory::ALL`]).

use serde::{Deserialize, Serialize};

use crate::corpus::ActionCategory;

/// Where a table cell came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Reported,
    Measured,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Reported => "reported",
            Provenance::Measured => "measured",
        }
    }
}

/// A published (P, R, F1) triple. Baseline columns publish F1 only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportedTriple {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
}

const fn f(f1: f64) -> ReportedTriple {
    ReportedTriple { precision: None, recall: None, f1 }
}

const fn t(p: f64, r: f64, f1: f64) -> ReportedTriple {
    ReportedTriple { precision: Some(p), recall: Some(r), f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportedColumn {
    pub system: &'static str,
    /// Supervised baseline rather than a prompted model.
    pub baseline: bool,
    pub stage1_binary: ReportedTriple,
    pub stage1_macro: ReportedTriple,
    pub stage2: [ReportedTriple; 7],
    pub stage2_macro: ReportedTriple,
}

impl ReportedColumn {
    pub fn category(&self, c: ActionCategory) -> ReportedTriple {
        self.stage2[c.index()]
    }
}

// Taxonomy order: appointment, lab, medication, imaging, procedure,
// patient instructions, other.
pub const REPORTED: [ReportedColumn; 7] = [
    ReportedColumn {
        system: "MIMIC-DNote-BERT+Context",
        baseline: true,
        stage1_binary: f(0.856),
        stage1_macro: f(0.661),
        stage2: [f(0.882), f(0.744), f(0.659), f(0.567), f(0.597), f(0.830), f(0.349)],
        stage2_macro: f(0.631),
    },
    ReportedColumn {
        system: "TTP-BERT+Context (250k)",
        baseline: true,
        stage1_binary: f(0.866),
        stage1_macro: f(0.668),
        stage2: [f(0.887), f(0.745), f(0.668), f(0.566), f(0.548), f(0.841), f(0.365)],
        stage2_macro: f(0.668),
    },
    ReportedColumn {
        system: "MedGemma-27B-it",
        baseline: false,
        stage1_binary: t(0.379, 0.582, 0.459),
        stage1_macro: t(0.642, 0.748, 0.684),
        stage2: [
            t(0.50, 0.54, 0.52),
            t(0.52, 0.53, 0.527),
            t(0.377, 0.326, 0.350),
            t(0.204, 0.568, 0.300),
            t(0.46, 0.464, 0.462),
            t(0.37, 0.36, 0.363),
            t(0.18, 0.165, 0.172),
        ],
        stage2_macro: t(0.373, 0.422, 0.385),
    },
    ReportedColumn {
        system: "GPT-5.2",
        baseline: false,
        stage1_binary: t(0.844, 0.785, 0.813),
        stage1_macro: t(0.909, 0.883, 0.895),
        stage2: [
            t(0.90, 0.74, 0.812),
            t(0.73, 0.74, 0.733),
            t(0.42, 0.39, 0.405),
            t(0.54, 0.51, 0.525),
            t(0.50, 0.48, 0.491),
            t(0.78, 0.77, 0.771),
            t(0.405, 0.180, 0.250),
        ],
        stage2_macro: t(0.611, 0.544, 0.570),
    },
    ReportedColumn {
        system: "Gemini-3-Flash",
        baseline: false,
        stage1_binary: t(0.803, 0.798, 0.801),
        stage1_macro: t(0.889, 0.887, 0.888),
        stage2: [
            t(0.82, 0.72, 0.765),
            t(0.885, 0.662, 0.754),
            t(0.43, 0.424, 0.427),
            t(0.49, 0.48, 0.485),
            t(0.48, 0.472, 0.476),
            t(0.75, 0.75, 0.750),
            t(0.21, 0.16, 0.182),
        ],
        stage2_macro: t(0.581, 0.524, 0.548),
    },
    ReportedColumn {
        system: "DeepSeek-V3.2",
        baseline: false,
        stage1_binary: t(0.658, 0.665, 0.661),
        stage1_macro: t(0.807, 0.811, 0.809),
        stage2: [
            t(0.45, 0.50, 0.474),
            t(0.60, 0.60, 0.601),
            t(0.31, 0.316, 0.313),
            t(0.556, 0.517, 0.536),
            t(0.506, 0.494, 0.500),
            t(0.58, 0.58, 0.581),
            t(0.12, 0.116, 0.118),
        ],
        stage2_macro: t(0.446, 0.446, 0.446),
    },
    ReportedColumn {
        system: "Claude 3.5 Sonnet",
        baseline: false,
        stage1_binary: t(0.731, 0.739, 0.735),
        stage1_macro: t(0.849, 0.853, 0.851),
        stage2: [
            t(0.73, 0.76, 0.747),
            t(0.695, 0.699, 0.697),
            t(0.48, 0.669, 0.559),
            t(0.51, 0.48, 0.492),
            t(0.49, 0.477, 0.483),
            t(0.67, 0.69, 0.677),
            t(0.14, 0.13, 0.135),
        ],
        stage2_macro: t(0.531, 0.558, 0.541),
    },
];

pub fn reported_column(system: &str) -> Option<&'static ReportedColumn> {
    REPORTED.iter().find(|c| c.system == system)
}
