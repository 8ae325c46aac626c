//! The two-stage chain: an actionability verdict for every sentence of a
//! batch, then categories for the sentences judged actionable.
//!
//! Versions without a two-stage chain run a single category prompt and derive
//! the verdict from whether any label came back.

mod checkpoint;
mod io;
mod parse;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, BackendRequest};
use crate::batcher::{partition_corpus, BatchError, ContextBatch};
use crate::corpus::{canonicalize, CorpusError, LabelSet, SentenceRecord};
use crate::prompts::{PromptError, PromptVersion, TemplateSet, Verdict, REPAIR_INSTRUCTION, SYSTEM_PROMPT};

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use io::{read_predictions, read_predictions_from, write_predictions, write_predictions_to, PREDICTION_HEADER};
pub use parse::{
    parse_stage1, parse_stage2, resolve_label, unwrap_fence, StageOneParse, StageOneVerdict, StageTwoEntry,
    StageTwoParse,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("batch {key}: {source}")]
    Backend { key: String, source: BackendError },
    #[error("run aborted at batch {key} after {completed} completed batch(es): {source}{}", resume_hint(.checkpoint))]
    Aborted { key: String, completed: usize, checkpoint: Option<PathBuf>, source: BackendError },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
}

fn resume_hint(checkpoint: &Option<PathBuf>) -> String {
    match checkpoint {
        Some(p) => format!(" (resume with checkpoint {})", p.display()),
        None => String::new(),
    }
}

/// Final prediction for one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub sent_index: usize,
    pub predicted_labels: LabelSet,
    pub stage1_verdict: Verdict,
    pub stage1_compliant: bool,
    /// `None` when the sentence never reached stage 2.
    pub stage2_compliant: Option<bool>,
}

/// Compliance re-prompting. At most one repair per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub repair: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { repair: true }
    }
}

/// Payload-level accounting, first attempts only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadStats {
    pub stage1_payloads: u64,
    pub stage1_payload_failures: u64,
    pub stage2_payloads: u64,
    pub stage2_payload_failures: u64,
    /// Repair re-prompts issued across both stages.
    pub repairs: u64,
}

impl PayloadStats {
    pub fn merge(&mut self, other: &PayloadStats) {
        self.stage1_payloads += other.stage1_payloads;
        self.stage1_payload_failures += other.stage1_payload_failures;
        self.stage2_payloads += other.stage2_payloads;
        self.stage2_payload_failures += other.stage2_payload_failures;
        self.repairs += other.repairs;
    }

    pub fn payload_failures(&self) -> u64 {
        self.stage1_payload_failures + self.stage2_payload_failures
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub key: String,
    pub predictions: Vec<PredictionRecord>,
    pub stats: PayloadStats,
}

/// Everything a run needs besides the corpus and the backend.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub version: PromptVersion,
    pub k: usize,
    pub parallelism: usize,
    pub model: String,
    pub max_output_tokens: u32,
    pub retry: RetryPolicy,
    pub templates: TemplateSet,
    pub checkpoint: Option<PathBuf>,
}

impl RunSettings {
    pub fn new(version: PromptVersion, k: usize) -> Self {
        RunSettings {
            version,
            k,
            parallelism: 1,
            model: "oracle".into(),
            max_output_tokens: BackendRequest::DEFAULT_MAX_OUTPUT_TOKENS,
            retry: RetryPolicy::default(),
            templates: TemplateSet::builtin().clone(),
            checkpoint: None,
        }
    }

    fn request(&self, user: String) -> BackendRequest {
        let mut r = BackendRequest::new(self.model.clone(), SYSTEM_PROMPT, user);
        r.max_output_tokens = self.max_output_tokens;
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    /// One record per input sentence, sorted by `(doc_id, sent_index)`.
    pub predictions: Vec<PredictionRecord>,
    pub stats: PayloadStats,
    pub batches: usize,
    /// Batches restored from a checkpoint instead of being run.
    pub resumed: usize,
}

/// Calls the backend, then once more with the repair instruction if `parse`
/// reports a compliance problem. Returns the first and the last parse.
fn call_with_repair<P>(
    backend: &impl Backend,
    settings: &RunSettings,
    key: &str,
    prompt: String,
    parse: impl Fn(&str) -> P,
    compliant: impl Fn(&P) -> bool,
    stats: &mut PayloadStats,
) -> Result<(P, Option<P>), PipelineError> {
    let call = |user: String| {
        backend
            .complete(&settings.request(user))
            .map_err(|source| PipelineError::Backend { key: key.to_string(), source })
    };
    let first = parse(&call(prompt.clone())?.text);
    if compliant(&first) || !settings.retry.repair {
        return Ok((first, None));
    }
    stats.repairs += 1;
    let second = parse(&call(prompt + REPAIR_INSTRUCTION)?.text);
    Ok((first, Some(second)))
}

/// Runs one batch through the configured chain.
pub fn run_batch(
    batch: &ContextBatch<'_>,
    backend: &impl Backend,
    settings: &RunSettings,
) -> Result<BatchOutcome, PipelineError> {
    let key = batch.key();
    let mut stats = PayloadStats::default();
    let version = settings.version;
    let all: Vec<usize> = (0..batch.len()).collect();

    if !version.is_two_stage() {
        let prompt = settings.templates.render_single_step(batch, version)?;
        let (first, last) = call_with_repair(
            backend,
            settings,
            &key,
            prompt,
            |raw| parse_stage2(raw, &all),
            StageTwoParse::fully_compliant,
            &mut stats,
        )?;
        stats.stage1_payloads += 1;
        stats.stage1_payload_failures += u64::from(!first.payload_ok);
        let last = last.as_ref().unwrap_or(&first);
        let predictions = batch
            .sentences
            .iter()
            .zip(first.entries.iter().zip(&last.entries))
            .map(|(s, (f, l))| PredictionRecord {
                doc_id: s.doc_id.clone(),
                sent_index: s.sent_index,
                stage1_verdict: if l.labels.is_empty() { Verdict::NonActionable } else { Verdict::Actionable },
                predicted_labels: l.labels.clone(),
                stage1_compliant: f.compliant,
                stage2_compliant: Some(f.compliant),
            })
            .collect();
        return Ok(BatchOutcome { key, predictions, stats });
    }

    let prompt = settings.templates.render_stage1(batch, version)?;
    let len = batch.len();
    let (first1, last1) = call_with_repair(
        backend,
        settings,
        &key,
        prompt,
        |raw| parse_stage1(raw, len),
        StageOneParse::fully_compliant,
        &mut stats,
    )?;
    stats.stage1_payloads += 1;
    stats.stage1_payload_failures += u64::from(!first1.payload_ok);
    let verdicts = &last1.as_ref().unwrap_or(&first1).verdicts;

    let actionable: Vec<usize> =
        verdicts.iter().filter(|v| v.verdict == Verdict::Actionable).map(|v| v.index).collect();
    let mut stage2: HashMap<usize, (bool, LabelSet)> = HashMap::new();
    if let Some(prompt) = settings.templates.render_stage2(batch, &actionable, version)? {
        let (first2, last2) = call_with_repair(
            backend,
            settings,
            &key,
            prompt,
            |raw| parse_stage2(raw, &actionable),
            StageTwoParse::fully_compliant,
            &mut stats,
        )?;
        stats.stage2_payloads += 1;
        stats.stage2_payload_failures += u64::from(!first2.payload_ok);
        let last2 = last2.as_ref().unwrap_or(&first2);
        for (f, l) in first2.entries.iter().zip(&last2.entries) {
            stage2.insert(f.index, (f.compliant, l.labels.clone()));
        }
    }

    let predictions = batch
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (stage2_compliant, labels) = match stage2.remove(&i) {
                Some((c, labels)) => (Some(c), labels),
                None => (None, LabelSet::new()),
            };
            PredictionRecord {
                doc_id: s.doc_id.clone(),
                sent_index: s.sent_index,
                predicted_labels: labels,
                stage1_verdict: verdicts[i].verdict,
                stage1_compliant: first1.verdicts[i].compliant,
                stage2_compliant,
            }
        })
        .collect();
    Ok(BatchOutcome { key, predictions, stats })
}

/// Runs every batch of the corpus. Completed batches are appended to the
/// checkpoint as they finish; a failed run can be resumed from it.
pub fn run_corpus(
    records: &[SentenceRecord],
    backend: &(impl Backend + ?Sized),
    settings: &RunSettings,
) -> Result<RunOutput, PipelineError> {
    if settings.parallelism == 0 {
        return Err(PipelineError::InvalidParallelism);
    }
    let mut sorted = records.to_vec();
    canonicalize(&mut sorted)?;
    let batches = partition_corpus(&sorted, settings.k)?;

    let header = CheckpointHeader {
        version: settings.version,
        k: settings.k,
        model: settings.model.clone(),
        backend: backend.id().to_string(),
    };
    let checkpoint = match &settings.checkpoint {
        Some(path) => Some(Checkpoint::open(path, &header)?),
        None => None,
    };
    let mut done: HashMap<String, BatchOutcome> = checkpoint.as_ref().map(Checkpoint::completed).unwrap_or_default();
    let resumed = batches.iter().filter(|b| done.contains_key(&b.key())).count();
    let pending: Vec<&ContextBatch<'_>> = batches.iter().filter(|b| !done.contains_key(&b.key())).collect();

    let sink = checkpoint.map(Mutex::new);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism)
        .build()
        .map_err(|e| PipelineError::Checkpoint { path: PathBuf::new(), detail: e.to_string() })?;
    // After the first failure no new batch is started; batches already in
    // flight finish and are checkpointed.
    let failed = AtomicBool::new(false);
    let results: Vec<Result<Option<BatchOutcome>, PipelineError>> = pool.install(|| {
        pending
            .par_iter()
            .map(|batch| {
                if failed.load(Ordering::SeqCst) {
                    return Ok(None);
                }
                let result = run_batch(batch, &backend, settings).and_then(|outcome| {
                    if let Some(sink) = &sink {
                        sink.lock().expect("checkpoint lock").append(&outcome)?;
                    }
                    Ok(outcome)
                });
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                result.map(Some)
            })
            .collect()
    });

    let mut first_error = None;
    let mut completed = resumed;
    for result in results {
        match result {
            Ok(Some(outcome)) => {
                completed += 1;
                done.insert(outcome.key.clone(), outcome);
            }
            Ok(None) => {}
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = first_error {
        return Err(match e {
            PipelineError::Backend { key, source } => {
                PipelineError::Aborted { key, completed, checkpoint: settings.checkpoint.clone(), source }
            }
            other => other,
        });
    }

    let mut predictions = Vec::with_capacity(sorted.len());
    let mut stats = PayloadStats::default();
    for batch in &batches {
        let outcome = done.remove(&batch.key()).expect("every batch completed");
        stats.merge(&outcome.stats);
        predictions.extend(outcome.predictions);
    }
    Ok(RunOutput { predictions, stats, batches: batches.len(), resumed })
}
