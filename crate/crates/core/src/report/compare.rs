//! Comparison of measured runs against the published baseline columns.

use serde::Serialize;

use crate::corpus::io::csv_cell;
use crate::corpus::ActionCategory;
use crate::metrics::{EvaluationReport, Provenance, ReportedColumn, REPORTED};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonColumn {
    pub system: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub value: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub columns: Vec<ComparisonColumn>,
    /// Metric name and one cell per column.
    pub rows: Vec<(String, Vec<ComparisonCell>)>,
}

fn metric_names() -> Vec<String> {
    let mut names = vec!["Stage 1 Binary F1".to_string(), "Stage 1 Macro F1".to_string()];
    names.extend(ActionCategory::ALL.iter().map(|c| format!("Stage 2 F1: {c}")));
    names.push("Stage 2 Macro F1".into());
    names
}

fn reported_values(col: &ReportedColumn) -> Vec<f64> {
    let mut v = vec![col.stage1_binary.f1, col.stage1_macro.f1];
    v.extend(col.stage2.iter().map(|t| t.f1));
    v.push(col.stage2_macro.f1);
    v
}

fn measured_values<T: Real>(r: &EvaluationReport<T>) -> Vec<f64> {
    let mut v = vec![r.stage1.binary_f1.to_f64_lossy(), r.stage1.macro_f1.to_f64_lossy()];
    v.extend(r.stage2.categories.iter().map(|c| c.score.f1.to_f64_lossy()));
    v.push(r.stage2.macro_f1.to_f64_lossy());
    v
}

fn run_label<T: Real>(r: &EvaluationReport<T>) -> String {
    let m = &r.metadata;
    match (m.prompt_version, m.k) {
        (Some(v), Some(k)) => format!("{} [{v}, k={k}]", m.backend),
        (Some(v), None) => format!("{} [{v}]", m.backend),
        (None, Some(k)) => format!("{} [k={k}]", m.backend),
        (None, None) => m.backend.clone(),
    }
}

/// Baseline columns first, then measured runs ordered by backend name.
pub fn render_comparison<T: Real>(runs: &[EvaluationReport<T>]) -> ComparisonTable {
    let mut measured: Vec<(String, Vec<f64>)> = runs.iter().map(|r| (run_label(r), measured_values(r))).collect();
    measured.sort_by(|a, b| a.0.cmp(&b.0));
    let mut columns = Vec::new();
    let mut values: Vec<(Provenance, Vec<f64>)> = Vec::new();
    for col in REPORTED.iter().filter(|c| c.baseline) {
        columns.push(ComparisonColumn { system: col.system.to_string(), provenance: Provenance::Reported });
        values.push((Provenance::Reported, reported_values(col)));
    }
    for (label, v) in measured {
        columns.push(ComparisonColumn { system: label, provenance: Provenance::Measured });
        values.push((Provenance::Measured, v));
    }
    let rows = metric_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let cells = values.iter().map(|(p, v)| ComparisonCell { value: v[i], provenance: *p }).collect();
            (name, cells)
        })
        .collect();
    ComparisonTable { columns, rows }
}

impl ComparisonTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Metric |");
        for c in &self.columns {
            out.push_str(&format!(" {} |", c.system));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.columns.len()));
        out.push('\n');
        for (name, cells) in &self.rows {
            out.push_str(&format!("| {name} |"));
            for cell in cells {
                out.push_str(&format!(" {:.3} ({}) |", cell.value, cell.provenance.as_str()));
            }
            out.push('\n');
        }
        out
    }

    /// Long format: one line per (metric, system).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,system,provenance,value\n");
        for (name, cells) in &self.rows {
            for (col, cell) in self.columns.iter().zip(cells) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    csv_cell(name),
                    csv_cell(&col.system),
                    cell.provenance.as_str(),
                    cell.value
                ));
            }
        }
        out
    }
}
