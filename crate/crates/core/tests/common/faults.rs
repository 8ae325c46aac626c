//! Fault-injection suites. Expected non-compliance counts are derived from
//! the batch partition and the oracle rule table, never from a pipeline run.

use clinact::backend::{oracle_rules, Fault, FaultContext, FaultInjectingBackend, OracleBackend, PromptKind};
use clinact::batcher::{partition_corpus, ContextBatch};
use clinact::corpus::SentenceRecord;
use clinact::metrics::compliance_rate;
use clinact::pipeline::{run_corpus, PredictionRecord, RunSettings};
use clinact::prompts::{PromptVersion, Verdict};

use super::fixtures::bundled_records;
use super::Check;

const K: usize = 15;

/// Deterministic pseudo-random choice of batches by their first sentence.
fn picked(first: &str) -> bool {
    first.len() % 3 == 0
}

fn oracle_actionable(text: &str) -> bool {
    oracle_rules().classify(text).0 == Verdict::Actionable
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub stage1_bad: u64,
    pub stage1_total: u64,
    pub stage2_bad: u64,
    pub stage2_total: u64,
}

impl Counts {
    fn rates(&self) -> (f64, f64) {
        let r = |bad: u64, total: u64| if total == 0 { 0.0 } else { bad as f64 / total as f64 };
        (r(self.stage1_bad, self.stage1_total), r(self.stage2_bad, self.stage2_total))
    }
}

struct Plan<'a> {
    batches: Vec<ContextBatch<'a>>,
}

impl<'a> Plan<'a> {
    fn new(records: &'a [SentenceRecord]) -> Self {
        Plan { batches: partition_corpus(records, K).unwrap() }
    }

    fn actionable(b: &ContextBatch<'_>) -> usize {
        b.sentences.iter().filter(|s| oracle_actionable(&s.text())).count()
    }

    fn picked_stage1(&self) -> impl Iterator<Item = &ContextBatch<'a>> {
        self.batches.iter().filter(|b| picked(&b.sentences[0].text()))
    }

    /// Stage-2 prompts open with the first actionable sentence of a batch.
    fn picked_stage2(&self) -> impl Iterator<Item = &ContextBatch<'a>> {
        self.batches.iter().filter(|b| {
            b.sentences.iter().map(|s| s.text()).find(|t| oracle_actionable(t)).is_some_and(|t| picked(&t))
        })
    }

    fn sentences(&self) -> u64 {
        self.batches.iter().map(|b| b.len() as u64).sum()
    }

    fn stage2_entries(&self) -> u64 {
        self.batches.iter().map(|b| Self::actionable(b) as u64).sum()
    }

    fn stage2_payloads(&self) -> u64 {
        self.batches.iter().filter(|b| Self::actionable(b) > 0).count() as u64
    }

    fn clean(&self) -> Counts {
        Counts { stage1_bad: 0, stage1_total: self.sentences(), stage2_bad: 0, stage2_total: self.stage2_entries() }
    }
}

fn observed(predictions: &[PredictionRecord]) -> Counts {
    let c = compliance_rate::<f64>(predictions).unwrap();
    let s2 = c.stage2.unwrap_or(clinact::metrics::Rate { compliant: 0, total: 0, rate: 0.0 });
    Counts {
        stage1_bad: c.stage1.total - c.stage1.compliant,
        stage1_total: c.stage1.total,
        stage2_bad: s2.total - s2.compliant,
        stage2_total: s2.total,
    }
}

fn chain_holds(predictions: &[PredictionRecord]) -> bool {
    predictions.iter().all(|p| p.stage1_verdict == Verdict::Actionable || p.predicted_labels.is_empty())
}

/// Verdicts and labels only: compliance flags describe the first attempt
/// and so legitimately differ after a repair.
fn decisions(predictions: &[PredictionRecord]) -> Vec<(&str, usize, Verdict, &clinact::corpus::LabelSet)> {
    predictions.iter().map(|p| (p.doc_id.as_str(), p.sent_index, p.stage1_verdict, &p.predicted_labels)).collect()
}

type Selector = Box<dyn Fn(&FaultContext) -> Option<Fault> + Send + Sync>;

fn on_first_attempt(kind: PromptKind, fault: impl Fn(&FaultContext) -> Fault + Send + Sync + 'static) -> Selector {
    Box::new(move |ctx: &FaultContext| {
        let hit = ctx.kind == kind && !ctx.is_retry && ctx.first_sentence.as_deref().is_some_and(picked);
        hit.then(|| fault(ctx))
    })
}

fn run(records: &[SentenceRecord], select: Selector, repair: bool, parallelism: usize) -> (Vec<PredictionRecord>, u64) {
    let backend = FaultInjectingBackend::new(OracleBackend::new(), select);
    let mut settings = RunSettings::new(PromptVersion::V4, K);
    settings.retry.repair = repair;
    settings.parallelism = parallelism;
    let out = run_corpus(records, &backend, &settings).expect("faults are data, not errors");
    (out.predictions, out.stats.payload_failures())
}

fn compare(name: &str, expected: Counts, got: Counts, extra: Vec<(bool, String)>) -> Check {
    let (e1, e2) = expected.rates();
    let (g1, g2) = got.rates();
    let mut ok = expected == got;
    let mut detail = format!(
        "stage-1 non-compliance {}/{} (expected {}/{}), stage-2 {}/{} (expected {}/{}), rates {g1:.4}/{g2:.4} vs {e1:.4}/{e2:.4}",
        got.stage1_bad, got.stage1_total, expected.stage1_bad, expected.stage1_total,
        got.stage2_bad, got.stage2_total, expected.stage2_bad, expected.stage2_total,
    );
    for (pass, note) in extra {
        ok &= pass;
        if !pass {
            detail.push_str(&format!("; {note}"));
        }
    }
    Check::new(name, ok, detail)
}

/// Runs every suite over the bundled corpus.
pub fn fault_suites() -> Vec<Check> {
    let records = bundled_records();
    let plan = Plan::new(&records);
    let clean_counts = plan.clean();
    let mut checks = Vec::new();

    let (clean, failures) = run(&records, Box::new(|_: &FaultContext| None), true, 4);
    checks.push(compare("no faults", clean_counts, observed(&clean), vec![
        (failures == 0, format!("{failures} payload failures")),
        (chain_holds(&clean), "chain invariant violated".into()),
    ]));

    let truncated: u64 = plan.picked_stage1().map(|b| b.len() as u64).sum();
    let n_picked = plan.picked_stage1().count() as u64;

    let (p, failures) = run(&records, on_first_attempt(PromptKind::Actionability, |_| Fault::Truncate), true, 4);
    checks.push(compare(
        "truncated stage-1 payloads, repaired",
        Counts { stage1_bad: truncated, ..clean_counts },
        observed(&p),
        vec![
            (failures == n_picked, format!("{failures} payload failures, expected {n_picked}")),
            (decisions(&p) == decisions(&clean), "repaired predictions differ from the clean run".into()),
            (chain_holds(&p), "chain invariant violated".into()),
        ],
    ));

    let lost: u64 = plan.picked_stage1().map(|b| Plan::actionable(b) as u64).sum();
    let (p, _) = run(&records, on_first_attempt(PromptKind::Actionability, |_| Fault::Truncate), false, 4);
    let dropped_to_na = p
        .iter()
        .filter(|r| r.stage1_verdict == Verdict::NonActionable && !r.stage1_compliant)
        .count() as u64;
    checks.push(compare(
        "truncated stage-1 payloads, no repair",
        Counts { stage1_bad: truncated, stage2_total: clean_counts.stage2_total - lost, ..clean_counts },
        observed(&p),
        vec![
            (dropped_to_na == truncated, format!("{dropped_to_na} non-compliant records defaulted to Non-Actionable")),
            (chain_holds(&p), "chain invariant violated".into()),
        ],
    ));

    let (p, _) = run(
        &records,
        on_first_attempt(PromptKind::Actionability, |ctx| Fault::DropIndex(*ctx.indices.last().unwrap())),
        true,
        4,
    );
    checks.push(compare(
        "missing stage-1 index",
        Counts { stage1_bad: n_picked, ..clean_counts },
        observed(&p),
        vec![(p.len() == records.len(), "a sentence lost its record".into()), (chain_holds(&p), "chain invariant violated".into())],
    ));

    let (p, _) = run(&records, on_first_attempt(PromptKind::Actionability, |ctx| Fault::BadVerdict(ctx.indices[0])), true, 4);
    checks.push(compare(
        "unrecognized stage-1 verdict",
        Counts { stage1_bad: n_picked, ..clean_counts },
        observed(&p),
        vec![(chain_holds(&p), "chain invariant violated".into())],
    ));

    let every_stage2: Selector =
        Box::new(|ctx: &FaultContext| (ctx.kind == PromptKind::Categories && !ctx.is_retry).then(|| Fault::UnknownLabel(ctx.indices[0])));
    let (p, _) = run(&records, every_stage2, true, 4);
    checks.push(compare(
        "unknown stage-2 label",
        Counts { stage2_bad: plan.stage2_payloads(), ..clean_counts },
        observed(&p),
        vec![(decisions(&p) == decisions(&clean), "repaired predictions differ from the clean run".into()), (chain_holds(&p), "chain invariant violated".into())],
    ));

    let (p, _) = run(&records, on_first_attempt(PromptKind::Categories, |_| Fault::Truncate), true, 8);
    let truncated2: u64 = plan.picked_stage2().map(|b| Plan::actionable(b) as u64).sum();
    checks.push(compare(
        "truncated stage-2 payloads",
        Counts { stage2_bad: truncated2, ..clean_counts },
        observed(&p),
        vec![(chain_holds(&p), "chain invariant violated".into())],
    ));

    let (p, failures) = run(&records, Box::new(|_: &FaultContext| Some(Fault::Fence)), true, 4);
    checks.push(compare("fenced output", clean_counts, observed(&p), vec![
        (failures == 0, format!("{failures} payload failures")),
        (p == clean, "fenced predictions differ from the clean run".into()),
    ]));

    checks
}
