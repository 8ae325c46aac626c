//! Batch-size selection by successive halving.
//!
//! Each stage evaluates the surviving batch sizes on the same seeded document
//! subset, discards any candidate that produced an unparseable payload, and
//! keeps candidates whose macro F1 and every per-category F1 are within
//! `delta` of the best value at that stage. Subsets grow from stage to stage
//! and are nested prefixes of one seeded permutation.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::Backend;
use crate::corpus::{ActionCategory, SentenceRecord};
use crate::metrics::{evaluate, EvaluationReport, RunMetadata};
use crate::pipeline::{run_corpus, PipelineError, RunSettings};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum TuningError {
    #[error("invalid tuner configuration: {0}")]
    Config(String),
    #[error("candidate reports were computed on different document subsets ({expected} vs {found})")]
    Protocol { expected: String, found: String },
    #[error("evaluating k={k}: {source}")]
    Evaluation { k: usize, source: Box<dyn std::error::Error + Send + Sync> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// `value >= best - delta`.
    Absolute,
    /// `value >= best * (1 - delta)`.
    Relative,
}

/// Documents evaluated at one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Docs(usize),
    All,
}

impl Budget {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            Budget::Docs(n) => n.min(available),
            Budget::All => available,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Docs(n) => write!(f, "{n}"),
            Budget::All => f.write_str("all"),
        }
    }
}

impl std::str::FromStr for Budget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all" | "All" | "ALL" => Ok(Budget::All),
            n => n.parse().map(Budget::Docs).map_err(|_| format!("budget `{s}` is neither a count nor `all`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TunerConfig<T: Real> {
    pub candidate_ks: Vec<usize>,
    pub delta: T,
    pub delta_mode: DeltaMode,
    pub stage_budgets: Vec<Budget>,
    pub seed: u64,
}

impl<T: Real> Default for TunerConfig<T> {
    fn default() -> Self {
        TunerConfig {
            candidate_ks: vec![10, 15, 30],
            delta: T::from_f64_lossy(0.05),
            delta_mode: DeltaMode::Absolute,
            stage_budgets: vec![Budget::Docs(50), Budget::Docs(100), Budget::All],
            seed: 0,
        }
    }
}

impl<T: Real> TunerConfig<T> {
    pub fn validate(&self) -> Result<(), TuningError> {
        let bad = |m: &str| Err(TuningError::Config(m.into()));
        if self.candidate_ks.is_empty() {
            return bad("no candidate batch sizes");
        }
        if self.candidate_ks.contains(&0) {
            return bad("batch sizes must be at least 1");
        }
        let mut ks = self.candidate_ks.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() != self.candidate_ks.len() {
            return bad("duplicate candidate batch sizes");
        }
        if !(self.delta > T::zero()) {
            return bad("delta must be positive");
        }
        if self.delta_mode == DeltaMode::Relative && self.delta >= T::one() {
            return bad("relative delta must be below 1");
        }
        if self.stage_budgets.is_empty() {
            return bad("no stage budgets");
        }
        for pair in self.stage_budgets.windows(2) {
            let increasing = match pair {
                [Budget::Docs(a), Budget::Docs(b)] => a < b,
                [Budget::Docs(_), Budget::All] => true,
                _ => false,
            };
            if !increasing {
                return bad("stage budgets must be strictly increasing, with `all` only last");
            }
        }
        if self.stage_budgets.contains(&Budget::Docs(0)) {
            return bad("stage budgets must be positive");
        }
        Ok(())
    }

    fn threshold(&self, best: T) -> T {
        match self.delta_mode {
            DeltaMode::Absolute => best - self.delta,
            DeltaMode::Relative => best * (T::one() - self.delta),
        }
    }
}

/// The numbers the acceptance rule reads from an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CandidateScores<T: Real> {
    pub macro_f1: T,
    /// Taxonomy order.
    pub category_f1: [T; 7],
    /// Entry-level compliance over both stages; breaks ties.
    pub compliance: T,
    /// First-attempt payloads that did not parse at all.
    pub payload_failures: u64,
}

impl<T: Real> CandidateScores<T> {
    pub fn from_report(report: &EvaluationReport<T>, payload_failures: u64) -> Self {
        let mut category_f1 = [T::zero(); 7];
        for c in ActionCategory::ALL {
            category_f1[c.index()] = report.stage2.f1(c);
        }
        CandidateScores {
            macro_f1: report.stage2.macro_f1,
            category_f1,
            compliance: report.compliance.overall.rate,
            payload_failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CandidateEvaluation<T: Real> {
    pub k: usize,
    /// Digest of the document subset the scores were computed on.
    pub subset: String,
    pub scores: CandidateScores<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport<T>>,
}

/// Produces an evaluation of batch size `k` on a document subset.
pub trait CandidateEvaluator<T: Real>: Sync {
    fn evaluate(&self, k: usize, documents: &[String]) -> Result<CandidateEvaluation<T>, TuningError>;
}

impl<T: Real, F> CandidateEvaluator<T> for F
where
    F: Fn(usize, &[String]) -> Result<CandidateEvaluation<T>, TuningError> + Sync,
{
    fn evaluate(&self, k: usize, documents: &[String]) -> Result<CandidateEvaluation<T>, TuningError> {
        self(k, documents)
    }
}

/// Stable digest of a document subset.
pub fn subset_digest(documents: &[String]) -> String {
    let mut h = Sha256::new();
    for d in documents {
        h.update(d.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Runs the real pipeline on the selected documents and scores it.
pub struct PipelineEvaluator<'a, B: ?Sized> {
    pub gold: &'a [SentenceRecord],
    pub backend: &'a B,
    pub settings: RunSettings,
}

impl<T: Real, B: Backend + ?Sized> CandidateEvaluator<T> for PipelineEvaluator<'_, B> {
    fn evaluate(&self, k: usize, documents: &[String]) -> Result<CandidateEvaluation<T>, TuningError> {
        let wanted: std::collections::HashSet<&str> = documents.iter().map(String::as_str).collect();
        let subset: Vec<SentenceRecord> =
            self.gold.iter().filter(|r| wanted.contains(r.doc_id.as_str())).cloned().collect();
        let mut settings = self.settings.clone();
        settings.k = k;
        settings.checkpoint = None;
        let boxed = |e: PipelineError| TuningError::Evaluation { k, source: Box::new(e) };
        let run = run_corpus(&subset, self.backend, &settings).map_err(boxed)?;
        let metadata = RunMetadata {
            backend: self.backend.id().to_string(),
            model: settings.model.clone(),
            prompt_version: Some(settings.version),
            k: Some(k),
            payloads: Some(run.stats),
            ..RunMetadata::default()
        };
        let report: EvaluationReport<T> = evaluate(&subset, &run.predictions, metadata)
            .map_err(|e| TuningError::Evaluation { k, source: Box::new(e) })?;
        Ok(CandidateEvaluation {
            k,
            subset: subset_digest(documents),
            scores: CandidateScores::from_report(&report, run.stats.payload_failures()),
            report: Some(report),
        })
    }
}

/// Reference values at one stage, taken over candidates that passed the
/// compliance gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StageBests<T: Real> {
    pub subset: String,
    pub macro_f1: T,
    pub category_f1: [T; 7],
}

impl<T: Real> StageBests<T> {
    /// `None` for an empty candidate list.
    pub fn from_candidates(candidates: &[&CandidateEvaluation<T>]) -> Option<StageBests<T>> {
        let first = candidates.first()?;
        let mut bests = StageBests {
            subset: first.subset.clone(),
            macro_f1: first.scores.macro_f1,
            category_f1: first.scores.category_f1,
        };
        for c in &candidates[1..] {
            bests.macro_f1 = bests.macro_f1.max(c.scores.macro_f1);
            for (b, v) in bests.category_f1.iter_mut().zip(c.scores.category_f1) {
                *b = b.max(v);
            }
        }
        Some(bests)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub accepted: bool,
    pub reasons: Vec<String>,
}

fn gate_reason(payload_failures: u64) -> Option<String> {
    (payload_failures > 0).then(|| format!("compliance gate: {payload_failures} unparseable payload(s)"))
}

/// The category-aware acceptance rule, including the compliance gate.
pub fn accept<T: Real>(
    candidate: &CandidateEvaluation<T>,
    bests: &StageBests<T>,
    config: &TunerConfig<T>,
) -> Result<Acceptance, TuningError> {
    if candidate.subset != bests.subset {
        return Err(TuningError::Protocol { expected: bests.subset.clone(), found: candidate.subset.clone() });
    }
    let s = &candidate.scores;
    let mut reasons = Vec::new();
    if let Some(r) = gate_reason(s.payload_failures) {
        reasons.push(r);
    }
    let floor = config.threshold(bests.macro_f1);
    if s.macro_f1 < floor {
        reasons.push(format!(
            "macro F1 {:.4} below {:.4} (best {:.4})",
            s.macro_f1.to_f64_lossy(),
            floor.to_f64_lossy(),
            bests.macro_f1.to_f64_lossy()
        ));
    }
    for c in ActionCategory::ALL {
        let best = bests.category_f1[c.index()];
        let floor = config.threshold(best);
        let v = s.category_f1[c.index()];
        if v < floor {
            reasons.push(format!(
                "{c} F1 {:.4} below {:.4} (best {:.4})",
                v.to_f64_lossy(),
                floor.to_f64_lossy(),
                best.to_f64_lossy()
            ));
        }
    }
    Ok(Acceptance { accepted: reasons.is_empty(), reasons })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StageOutcome<T: Real> {
    pub stage: usize,
    pub budget: Budget,
    pub documents: usize,
    pub subset: String,
    pub evaluations: Vec<CandidateEvaluation<T>>,
    pub bests: Option<StageBests<T>>,
    pub survivors: Vec<usize>,
    pub eliminated: BTreeMap<usize, Vec<String>>,
}

/// Evaluates every candidate on `documents` and applies the gate and the
/// acceptance rule. An empty survivor set is returned, not raised; [`tune`]
/// turns it into a failure.
pub fn run_stage<T: Real>(
    stage: usize,
    budget: Budget,
    candidates: &[usize],
    documents: &[String],
    evaluator: &dyn CandidateEvaluator<T>,
    config: &TunerConfig<T>,
) -> Result<StageOutcome<T>, TuningError> {
    let subset = subset_digest(documents);
    let evaluations: Vec<CandidateEvaluation<T>> = candidates
        .par_iter()
        .map(|&k| evaluator.evaluate(k, documents))
        .collect::<Result<_, _>>()?;
    for e in &evaluations {
        if e.subset != subset {
            return Err(TuningError::Protocol { expected: subset.clone(), found: e.subset.clone() });
        }
    }
    let gated: Vec<&CandidateEvaluation<T>> =
        evaluations.iter().filter(|e| e.scores.payload_failures == 0).collect();
    let bests = StageBests::from_candidates(&gated);
    let mut survivors = Vec::new();
    let mut eliminated = BTreeMap::new();
    for e in &evaluations {
        let verdict = match &bests {
            Some(b) => accept(e, b, config)?,
            None => Acceptance { accepted: false, reasons: gate_reason(e.scores.payload_failures).into_iter().collect() },
        };
        if verdict.accepted {
            survivors.push(e.k);
        } else {
            eliminated.insert(e.k, verdict.reasons);
        }
    }
    survivors.sort_unstable();
    Ok(StageOutcome { stage, budget, documents: documents.len(), subset, evaluations, bests, survivors, eliminated })
}

/// Highest macro F1 among survivors, then higher compliance, then smaller k.
pub fn select<T: Real>(outcome: &StageOutcome<T>) -> Option<usize> {
    outcome
        .evaluations
        .iter()
        .filter(|e| outcome.survivors.contains(&e.k))
        .max_by(|a, b| {
            let key = |e: &CandidateEvaluation<T>| (e.scores.macro_f1, e.scores.compliance);
            let (am, ac) = key(a);
            let (bm, bc) = key(b);
            am.partial_cmp(&bm)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ac.partial_cmp(&bc).unwrap_or(std::cmp::Ordering::Equal))
                .then(b.k.cmp(&a.k))
        })
        .map(|e| e.k)
}

/// Seeded nested subsets: stage `s` takes the first `budget_s` documents of
/// one permutation of the sorted document ids.
pub fn stage_subsets(documents: &[String], budgets: &[Budget], seed: u64) -> Vec<Vec<String>> {
    let mut ids: Vec<String> = documents.to_vec();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    budgets.iter().map(|b| ids[..b.resolve(ids.len())].to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TuningAudit<T: Real> {
    pub seed: u64,
    pub delta: T,
    pub delta_mode: DeltaMode,
    pub candidate_ks: Vec<usize>,
    pub stage_budgets: Vec<Budget>,
    pub stages: Vec<StageOutcome<T>>,
    pub selected_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Runs every stage. On failure the audit is still returned, with `failure`
/// set and `selected_k` empty.
pub fn tune<T: Real>(
    documents: &[String],
    evaluator: &dyn CandidateEvaluator<T>,
    config: &TunerConfig<T>,
) -> Result<TuningAudit<T>, TuningError> {
    config.validate()?;
    let mut audit = TuningAudit {
        seed: config.seed,
        delta: config.delta,
        delta_mode: config.delta_mode,
        candidate_ks: config.candidate_ks.clone(),
        stage_budgets: config.stage_budgets.clone(),
        stages: Vec::new(),
        selected_k: None,
        failure: None,
    };
    if documents.is_empty() {
        audit.failure = Some("no documents to tune on".into());
        return Ok(audit);
    }
    let mut candidates = config.candidate_ks.clone();
    candidates.sort_unstable();
    let subsets = stage_subsets(documents, &config.stage_budgets, config.seed);
    for (i, (budget, subset)) in config.stage_budgets.iter().zip(&subsets).enumerate() {
        let outcome = run_stage(i + 1, *budget, &candidates, subset, evaluator, config)?;
        candidates = outcome.survivors.clone();
        audit.stages.push(outcome);
        if candidates.is_empty() {
            audit.failure = Some(format!("every candidate was eliminated at stage {}", i + 1));
            return Ok(audit);
        }
    }
    audit.selected_k = audit.stages.last().and_then(select);
    Ok(audit)
}
