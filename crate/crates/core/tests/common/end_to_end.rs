//! Whole-pipeline checks with the deterministic oracle backend.

use std::sync::atomic::{AtomicUsize, Ordering};

use clinact::backend::{BackendError, Fault, FaultContext, FaultInjectingBackend, OracleBackend, PromptKind};
use clinact::corpus::actionable_rate;
use clinact::metrics::{evaluate, RunMetadata};
use clinact::pipeline::{run_corpus, write_predictions_to, PipelineError, RunSettings};
use clinact::prompts::{PromptVersion, Verdict};
use clinact::EvaluationReport;

use super::fixtures::{bundled_records, reference_records};
use super::Check;

pub const MIN_DOCUMENTS: usize = 30;
pub const MIN_SENTENCES: usize = 600;
pub const TARGET_RATE: f64 = 0.1136;
pub const RATE_TOLERANCE: f64 = 0.03;
const FAIL_AT: usize = 19;

fn outputs(parallelism: usize) -> (Vec<u8>, String) {
    let gold = bundled_records();
    let mut settings = RunSettings::new(PromptVersion::V4, 15);
    settings.parallelism = parallelism;
    let out = run_corpus(&gold, &OracleBackend::new(), &settings).unwrap();
    let mut csv = Vec::new();
    write_predictions_to(&out.predictions, &mut csv).unwrap();
    let meta = RunMetadata { backend: "oracle".into(), model: "oracle".into(), ..RunMetadata::default() };
    let report: EvaluationReport = evaluate(&gold, &out.predictions, meta).unwrap();
    (csv, serde_json::to_string(&report).unwrap())
}

fn determinism() -> Check {
    let serial = outputs(1);
    let again = outputs(1);
    let parallel = outputs(8);
    Check::new(
        "parallelism 1 and 8 give byte-identical predictions and report",
        serial == again && serial == parallel,
        format!("{} bytes of predictions, {} bytes of report", serial.0.len(), serial.1.len()),
    )
}

fn reference_labels() -> Vec<Check> {
    let gold = reference_records();
    let mut checks = Vec::new();
    for version in [PromptVersion::V3, PromptVersion::V4] {
        let out = run_corpus(&gold, &OracleBackend::new(), &RunSettings::new(version, 15)).unwrap();
        let mut wrong = Vec::new();
        for (p, g) in out.predictions.iter().zip(&gold) {
            let verdict_ok = (p.stage1_verdict == Verdict::Actionable) == g.is_actionable();
            if p.predicted_labels != g.true_labels || !verdict_ok {
                wrong.push(g.text());
            }
        }
        let report: EvaluationReport = evaluate(&gold, &out.predictions, RunMetadata::default()).unwrap();
        let imperfect: Vec<String> = report
            .stage2
            .categories
            .iter()
            .filter(|c| c.counts.tp + c.counts.fn_ > 0 && c.score.f1 != 1.0)
            .map(|c| c.category.to_string())
            .collect();
        checks.push(Check::new(
            format!("worked examples under {version}"),
            wrong.is_empty() && imperfect.is_empty() && report.stage1.binary_f1 == 1.0,
            format!(
                "mislabeled {wrong:?}, binary F1 {}, imperfect categories {imperfect:?}",
                report.stage1.binary_f1
            ),
        ));
    }
    checks
}

fn corpus_shape() -> Check {
    let gold = bundled_records();
    let mut docs: Vec<&str> = gold.iter().map(|r| r.doc_id.as_str()).collect();
    docs.dedup();
    let rate = actionable_rate(&gold).unwrap();
    Check::new(
        "bundled corpus shape",
        docs.len() >= MIN_DOCUMENTS && gold.len() >= MIN_SENTENCES && (rate - TARGET_RATE).abs() <= RATE_TOLERANCE,
        format!("{} documents, {} sentences, actionable rate {rate:.4}", docs.len(), gold.len()),
    )
}

/// A run that dies mid-corpus resumes from its checkpoint and ends with the
/// same predictions as an uninterrupted run.
fn checkpoint_resume() -> Check {
    let gold = bundled_records();
    let dir = tempfile::tempdir().unwrap();
    let mut settings = RunSettings::new(PromptVersion::V4, 15);
    settings.checkpoint = Some(dir.path().join("run.ckpt"));
    let clean = run_corpus(&gold, &OracleBackend::new(), &RunSettings::new(PromptVersion::V4, 15)).unwrap();

    // Serial run: the twentieth stage-1 call fails, so nineteen batches are
    // checkpointed before the abort.
    let calls = AtomicUsize::new(0);
    let failing = FaultInjectingBackend::new(OracleBackend::new(), |ctx: &FaultContext| {
        let stage1 = ctx.kind == PromptKind::Actionability;
        (stage1 && calls.fetch_add(1, Ordering::SeqCst) == FAIL_AT)
            .then(|| Fault::Error(BackendError::Transport { attempts: 1, message: "injected".into() }))
    });
    let first = run_corpus(&gold, &failing, &settings);
    let aborted = matches!(first, Err(PipelineError::Aborted { .. }));
    let resumed = run_corpus(&gold, &OracleBackend::new(), &settings).unwrap();
    Check::new(
        "checkpoint resume after an injected backend error",
        aborted && resumed.resumed == FAIL_AT && resumed.predictions == clean.predictions,
        format!("first run aborted: {aborted}, resumed {} of {} batches", resumed.resumed, resumed.batches),
    )
}

pub fn end_to_end_checks() -> Vec<Check> {
    let mut checks = vec![determinism()];
    checks.extend(reference_labels());
    checks.push(corpus_shape());
    checks.push(checkpoint_resume());
    checks
}
