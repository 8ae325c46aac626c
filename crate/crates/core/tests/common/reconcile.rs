//! Error cases counted by kind must equal the confusion counts of the
//! evaluation they came from.

use clinact::backend::{Fault, FaultContext, FaultInjectingBackend, OracleBackend, PromptKind};
use clinact::corpus::{ActionCategory, LabelSet, SentenceRecord};
use clinact::metrics::{evaluate, RunMetadata};
use clinact::pipeline::{run_corpus, PredictionRecord, RunSettings};
use clinact::prompts::{PromptVersion, Verdict};
use clinact::report::{collect_errors, Direction, ErrorKind, ErrorSummary};
use clinact::EvaluationReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::bundled_records;
use super::Check;

/// Empty when every count agrees; otherwise one line per disagreement.
pub fn disagreements(gold: &[SentenceRecord], predictions: &[PredictionRecord]) -> Vec<String> {
    let report: EvaluationReport = evaluate(gold, predictions, RunMetadata::default()).unwrap();
    let cases = collect_errors(gold, predictions).unwrap();
    let count = |f: &dyn Fn(&clinact::report::ErrorCase) -> bool| cases.iter().filter(|c| f(c)).count() as u64;
    let mut out = Vec::new();
    let mut check = |what: String, cases: u64, metric: u64| {
        if cases != metric {
            out.push(format!("{what}: {cases} error cases vs {metric} in the report"));
        }
    };
    let a = &report.stage1.actionable.counts;
    check("stage-1 FP".into(), count(&|c| c.kind == ErrorKind::Stage1Fp), a.fp);
    check("stage-1 FN".into(), count(&|c| c.kind == ErrorKind::Stage1Fn), a.fn_);
    for c in ActionCategory::ALL {
        let counts = &report.stage2.category(c).counts;
        let of = |d: Direction| {
            count(&|e| e.kind == ErrorKind::Stage2CategoryConfusion && e.category == Some(c) && e.direction == Some(d))
        };
        check(format!("{c} FP"), of(Direction::Spurious), counts.fp);
        check(format!("{c} FN"), of(Direction::Missed), counts.fn_);
    }
    let s1 = &report.compliance.stage1;
    check(
        "stage-1 non-compliance".into(),
        count(&|c| c.kind == ErrorKind::ComplianceFailure && c.stage == Some(1)),
        s1.total - s1.compliant,
    );
    let s2 = report.compliance.stage2.as_ref().map_or(0, |r| r.total - r.compliant);
    check(
        "stage-2 non-compliance".into(),
        count(&|c| c.kind == ErrorKind::ComplianceFailure && c.stage == Some(2)),
        s2,
    );
    out.extend(ErrorSummary::from_cases(&cases).reconcile(&report));
    out
}

fn random_run(rng: &mut ChaCha8Rng) -> (Vec<SentenceRecord>, Vec<PredictionRecord>) {
    let mut gold = Vec::new();
    let mut preds = Vec::new();
    for d in 0..rng.random_range(1..6) {
        for i in 0..rng.random_range(1..40) {
            let mut labels = || -> LabelSet {
                if rng.random_bool(0.6) {
                    return LabelSet::new();
                }
                ActionCategory::ALL.iter().copied().filter(|_| rng.random_bool(0.3)).collect()
            };
            let true_labels = labels();
            let predicted_labels = labels();
            let actionable = !predicted_labels.is_empty() || rng.random_bool(0.1);
            gold.push(SentenceRecord {
                doc_id: format!("d{d}"),
                sent_index: i,
                tokens: vec!["x".into()],
                true_labels,
            });
            preds.push(PredictionRecord {
                doc_id: format!("d{d}"),
                sent_index: i,
                predicted_labels,
                stage1_verdict: if actionable { Verdict::Actionable } else { Verdict::NonActionable },
                stage1_compliant: rng.random_bool(0.9),
                stage2_compliant: actionable.then(|| rng.random_bool(0.9)),
            });
        }
    }
    (gold, preds)
}

pub const RANDOM_RUNS: usize = 300;

pub fn reconcile_suites() -> Vec<Check> {
    let gold = bundled_records();
    let mut checks = Vec::new();
    let mut run = |name: &str, version: PromptVersion, k: usize, truncate: bool| {
        let backend = FaultInjectingBackend::new(OracleBackend::new(), move |ctx: &FaultContext| {
            (truncate && ctx.kind == PromptKind::Actionability && ctx.indices.len() % 2 == 1).then_some(Fault::Truncate)
        });
        let mut settings = RunSettings::new(version, k);
        settings.retry.repair = !truncate;
        let out = run_corpus(&gold, &backend, &settings).unwrap();
        let d = disagreements(&gold, &out.predictions);
        checks.push(Check::new(name, d.is_empty(), d.join("; ")));
    };
    for version in [PromptVersion::V1, PromptVersion::V2, PromptVersion::V3, PromptVersion::V4] {
        for k in [10, 15, 30] {
            run(&format!("bundled corpus, {version}, k={k}"), version, k, false);
        }
    }
    run("bundled corpus, truncated stage-1 payloads", PromptVersion::V4, 15, true);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();
    for i in 0..RANDOM_RUNS {
        let (gold, preds) = random_run(&mut rng);
        let d = disagreements(&gold, &preds);
        if !d.is_empty() {
            failures.push(format!("run {i}: {}", d.join("; ")));
        }
    }
    checks.push(Check::new(format!("{RANDOM_RUNS} random prediction sets"), failures.is_empty(), failures.join(" | ")));
    checks
}
