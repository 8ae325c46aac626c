#![allow(dead_code)]

pub mod batching;
pub mod end_to_end;
pub mod faults;
pub mod fixtures;
pub mod reconcile;
pub mod spans;
pub mod tuner_scenarios;

use std::path::{Path, PathBuf};

/// One named check inside a suite.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), ok, detail: detail.into() }
    }
}

/// Panics with every failing check listed.
pub fn assert_all(checks: &[Check]) {
    let failed: Vec<String> = checks.iter().filter(|c| !c.ok).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    assert!(failed.is_empty(), "{} of {} checks failed:\n{}", failed.len(), checks.len(), failed.join("\n"));
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

pub fn bundled_docs() -> PathBuf {
    manifest_dir().join("data/synthetic_docs.jsonl")
}

/// Runs the tool in-process and returns `(status, stdout, stderr)`.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("clinact").chain(args.iter().copied());
    let code = clinact::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) {
    let (code, _, err) = cli(args);
    assert_eq!(code, 0, "clinact {}: {err}", args.join(" "));
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Golden file name and the path the command under test wrote it to.
pub struct GoldenOutput {
    pub command: &'static str,
    pub name: &'static str,
    pub produced: PathBuf,
}

/// Runs every subcommand over the bundled corpus inside `dir`.
pub fn run_golden_pipeline(dir: &Path) -> Vec<GoldenOutput> {
    let sents = dir.join("sentences.csv");
    let preds = dir.join("predictions.csv");
    let meta = dir.join("run.json");
    let report = dir.join("report.json");
    let report_md = dir.join("report.md");
    let audit = dir.join("tuning_audit.json");
    let out = dir.join("report");
    ok(&["preprocess", "--in", p(&bundled_docs()), "--out", p(&sents)]);
    ok(&["run", "--in", p(&sents), "--out", p(&preds), "--meta", p(&meta), "--backend", "oracle", "--parallelism", "4"]);
    ok(&["evaluate", "--gold", p(&sents), "--in", p(&preds), "--meta", p(&meta), "--out", p(&report), "--markdown", p(&report_md)]);
    ok(&["tune", "--in", p(&sents), "--out", p(&audit), "--backend", "oracle", "--seed", "7"]);
    ok(&["report", "--gold", p(&sents), "--in", p(&preds), "--meta", p(&meta), "--out", p(&out)]);
    let g = |command, name, produced: PathBuf| GoldenOutput { command, name, produced };
    vec![
        g("preprocess", "sentences.csv", sents),
        g("run", "predictions.csv", preds),
        g("run", "run.json", meta),
        g("evaluate", "report.json", report),
        g("evaluate", "report.md", report_md),
        g("tune", "tuning_audit.json", audit),
        g("report", "errors.csv", out.join("errors.csv")),
        g("report", "errors.md", out.join("errors.md")),
        g("report", "flags.csv", out.join("flags.csv")),
        g("report", "comparison.md", out.join("comparison.md")),
        g("report", "comparison.csv", out.join("comparison.csv")),
    ]
}

/// Compares each output with its golden file, or rewrites the golden files
/// when `UPDATE_GOLDEN` is set. Returns the names that differ.
pub fn check_goldens(outputs: &[GoldenOutput]) -> Vec<String> {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut mismatched = Vec::new();
    for o in outputs {
        let produced = std::fs::read(&o.produced).unwrap();
        let golden = golden_dir().join(o.name);
        if update {
            std::fs::write(&golden, &produced).unwrap();
            continue;
        }
        if std::fs::read(&golden).ok().as_deref() != Some(produced.as_slice()) {
            mismatched.push(format!("{} ({})", o.name, o.command));
        }
    }
    mismatched
}
