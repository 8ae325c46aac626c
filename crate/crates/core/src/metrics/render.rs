//! Markdown rendering of an evaluation report.

use std::fmt::Write;

use super::{ClassScore, EvaluationReport, Rate, Score};
use crate::scalar::Real;

pub(crate) fn fmt3<T: Real>(v: T) -> String {
    format!("{:.3}", v.to_f64_lossy())
}

fn p_cell<T: Real>(s: &Score<T>) -> String {
    if s.precision_undefined {
        format!("{} (undef)", fmt3(s.precision))
    } else {
        fmt3(s.precision)
    }
}

fn r_cell<T: Real>(s: &Score<T>) -> String {
    if s.recall_undefined {
        format!("{} (undef)", fmt3(s.recall))
    } else {
        fmt3(s.recall)
    }
}

fn class_row<T: Real>(out: &mut String, name: &str, c: &ClassScore<T>) {
    let k = c.counts;
    let _ = writeln!(
        out,
        "| {name} | {} | {} | {} | {} | {} | {} | {} |",
        p_cell(&c.score),
        r_cell(&c.score),
        fmt3(c.score.f1),
        k.tp,
        k.fp,
        k.fn_,
        k.tn
    );
}

fn rate_row<T: Real>(out: &mut String, name: &str, rate: Option<&Rate<T>>) {
    let _ = match rate {
        Some(r) => writeln!(out, "| {name} | {} | {} | {} |", r.compliant, r.total, fmt3(r.rate)),
        None => writeln!(out, "| {name} | 0 | 0 | n/a |"),
    };
}

pub fn render_markdown<T: Real>(report: &EvaluationReport<T>) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let opt = |v: Option<String>| v.unwrap_or_else(|| "n/a".into());
    let _ = writeln!(out, "# Evaluation report\n");
    let _ = writeln!(out, "| Field | Value |\n|---|---|");
    let _ = writeln!(out, "| Backend | {} |", m.backend);
    let _ = writeln!(out, "| Model | {} |", m.model);
    let _ = writeln!(out, "| Prompt version | {} |", opt(m.prompt_version.map(|v| v.to_string())));
    let _ = writeln!(out, "| Batch size k | {} |", opt(m.k.map(|k| k.to_string())));
    let _ = writeln!(out, "| Documents | {} |", m.documents);
    let _ = writeln!(out, "| Sentences | {} |", m.sentences);

    let s1 = &report.stage1;
    let _ = writeln!(out, "\n## Stage 1: actionability\n");
    let _ = writeln!(out, "| Metric | P | R | F1 | TP | FP | FN | TN |\n|---|---|---|---|---|---|---|---|");
    class_row(&mut out, "Actionable", &s1.actionable);
    class_row(&mut out, "Non-Actionable", &s1.non_actionable);
    let _ = writeln!(out, "| Binary F1 | | | {} | | | | |", fmt3(s1.binary_f1));
    let _ = writeln!(
        out,
        "| Macro F1 | {} | {} | {} | | | | |",
        fmt3(s1.macro_precision),
        fmt3(s1.macro_recall),
        fmt3(s1.macro_f1)
    );

    let s2 = &report.stage2;
    let _ = writeln!(out, "\n## Stage 2: action categories\n");
    let _ = writeln!(out, "| Action category | P | R | F1 | TP | FP | FN |\n|---|---|---|---|---|---|---|");
    for c in &s2.categories {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            c.category,
            p_cell(&c.score),
            r_cell(&c.score),
            fmt3(c.score.f1),
            c.counts.tp,
            c.counts.fp,
            c.counts.fn_
        );
    }
    let _ = writeln!(
        out,
        "| Macro Average | {} | {} | {} | | | |",
        fmt3(s2.macro_precision),
        fmt3(s2.macro_recall),
        fmt3(s2.macro_f1)
    );

    let c = &report.compliance;
    let _ = writeln!(out, "\n## JSON compliance\n");
    let _ = writeln!(out, "| Stage | Compliant | Total | Rate |\n|---|---|---|---|");
    rate_row(&mut out, "Stage 1", Some(&c.stage1));
    rate_row(&mut out, "Stage 2", c.stage2.as_ref());
    rate_row(&mut out, "Overall", Some(&c.overall));
    if let Some(p) = &m.payloads {
        let _ = writeln!(
            out,
            "\nUnparseable payloads (first attempts): stage 1 {}/{}, stage 2 {}/{}; repair prompts: {}.",
            p.stage1_payload_failures, p.stage1_payloads, p.stage2_payload_failures, p.stage2_payloads, p.repairs
        );
    }
    out
}
