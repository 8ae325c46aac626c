//! Two-stage extraction of post-discharge follow-up actions from discharge
//! summaries, with a sentence-level evaluation harness and a batch-size tuner.
//!
//! `metrics` and `tuner` are generic over the scalar type; the aliases below
//! fix it to `f64`, which is what the command-line tool uses.

pub mod backend;
pub mod batcher;
pub mod cli;
pub mod corpus;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod scalar;
pub mod synthetic;
pub mod tuner;

pub type Score = metrics::Score<f64>;
pub type Stage1Report = metrics::Stage1Report<f64>;
pub type Stage2Report = metrics::Stage2Report<f64>;
pub type ComplianceReport = metrics::ComplianceReport<f64>;
pub type EvaluationReport = metrics::EvaluationReport<f64>;
pub type TunerConfig = tuner::TunerConfig<f64>;
pub type CandidateEvaluation = tuner::CandidateEvaluation<f64>;
pub type StageOutcome = tuner::StageOutcome<f64>;
pub type TuningAudit = tuner::TuningAudit<f64>;
