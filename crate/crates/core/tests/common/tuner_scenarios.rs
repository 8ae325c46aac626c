//! Scripted tuner scenarios with hand-traced outcomes, and a randomized
//! monotone-elimination property checked against an independent
//! re-implementation of the acceptance rule.

use std::collections::BTreeMap;

use clinact::tuner::{run_stage, select, subset_digest, tune, Budget, CandidateScores, DeltaMode, TuningError};
use clinact::{CandidateEvaluation, TunerConfig, TuningAudit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Check;

#[derive(Debug, Clone, Copy)]
pub struct Scripted {
    pub macro_f1: f64,
    pub cats: [f64; 7],
    pub compliance: f64,
    pub payload_failures: u64,
}

pub fn s(macro_f1: f64) -> Scripted {
    Scripted { macro_f1, cats: [0.6; 7], compliance: 1.0, payload_failures: 0 }
}

impl Scripted {
    fn cat(mut self, i: usize, v: f64) -> Self {
        self.cats[i] = v;
        self
    }
    fn compliance(mut self, c: f64) -> Self {
        self.compliance = c;
        self
    }
    fn failures(mut self, n: u64) -> Self {
        self.payload_failures = n;
        self
    }
}

fn evaluation(k: usize, documents: &[String], x: Scripted) -> CandidateEvaluation {
    CandidateEvaluation {
        k,
        subset: subset_digest(documents),
        scores: CandidateScores {
            macro_f1: x.macro_f1,
            category_f1: x.cats,
            compliance: x.compliance,
            payload_failures: x.payload_failures,
        },
        report: None,
    }
}

fn docs(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("doc{i:03}")).collect()
}

struct StageScenario {
    name: &'static str,
    delta: f64,
    mode: DeltaMode,
    scores: Vec<(usize, Scripted)>,
    survivors: Vec<usize>,
    /// Eliminated k and the number of reasons recorded for it.
    eliminated: Vec<(usize, usize)>,
    selected: Option<usize>,
}

fn stage_scenarios() -> Vec<StageScenario> {
    use DeltaMode::*;
    let sc = |name, scores: Vec<(usize, Scripted)>, survivors: Vec<usize>, eliminated: Vec<(usize, usize)>, selected| {
        StageScenario { name, delta: 0.05, mode: Absolute, scores, survivors, eliminated, selected }
    };
    vec![
        sc(
            "identical candidates tie-break to the smallest k",
            vec![(10, s(0.6)), (15, s(0.6)), (30, s(0.6))],
            vec![10, 15, 30],
            vec![],
            Some(10),
        ),
        sc(
            "macro tolerance reject",
            vec![(10, s(0.70)), (15, s(0.66)), (30, s(0.60))],
            vec![10, 15],
            vec![(30, 1)],
            Some(10),
        ),
        StageScenario {
            name: "relative tolerance reject",
            delta: 0.05,
            mode: Relative,
            // Floor is 0.70 * 0.95 = 0.665.
            scores: vec![(10, s(0.70)), (15, s(0.67)), (30, s(0.66))],
            survivors: vec![10, 15],
            eliminated: vec![(30, 1)],
            selected: Some(10),
        },
        StageScenario {
            name: "wider delta keeps a candidate",
            delta: 0.10,
            mode: Absolute,
            scores: vec![(10, s(0.70)), (15, s(0.66)), (30, s(0.61))],
            survivors: vec![10, 15, 30],
            eliminated: vec![],
            selected: Some(10),
        },
        sc(
            "per-category reject despite best macro",
            vec![(10, s(0.70)), (15, s(0.72).cat(3, 0.40)), (30, s(0.70))],
            vec![10, 30],
            vec![(15, 1)],
            Some(10),
        ),
        sc(
            "per-category drop within delta survives",
            vec![(10, s(0.70)), (15, s(0.70).cat(3, 0.56)), (30, s(0.69))],
            vec![10, 15, 30],
            vec![],
            Some(10),
        ),
        sc(
            "category bests come from different candidates",
            vec![(10, s(0.70).cat(1, 0.80)), (15, s(0.70).cat(3, 0.80)), (30, s(0.70).cat(1, 0.76).cat(3, 0.76))],
            vec![30],
            vec![(10, 1), (15, 1)],
            Some(30),
        ),
        sc(
            "compliance hard gate reject, bests from gated candidates only",
            vec![(10, s(0.90).cat(0, 0.95).failures(2)), (15, s(0.70)), (30, s(0.68))],
            vec![15, 30],
            vec![(10, 1)],
            Some(15),
        ),
        sc(
            "every candidate gated",
            vec![(10, s(0.7).failures(1)), (15, s(0.7).failures(3)), (30, s(0.7).failures(1))],
            vec![],
            vec![(10, 1), (15, 1), (30, 1)],
            None,
        ),
        sc(
            "tie-break on compliance",
            vec![(10, s(0.70).compliance(0.98)), (15, s(0.70).compliance(1.0)), (30, s(0.70).compliance(0.99))],
            vec![10, 15, 30],
            vec![],
            Some(15),
        ),
        sc(
            "higher macro wins over smaller k",
            vec![(10, s(0.70)), (15, s(0.70)), (30, s(0.72))],
            vec![10, 15, 30],
            vec![],
            Some(30),
        ),
        sc(
            "several reasons on one candidate",
            vec![(10, s(0.70)), (15, s(0.50).cat(1, 0.30).cat(6, 0.20).failures(1)), (30, s(0.70))],
            vec![10, 30],
            vec![(15, 4)],
            Some(10),
        ),
        sc(
            "single candidate",
            vec![(15, s(0.31))],
            vec![15],
            vec![],
            Some(15),
        ),
    ]
}

fn run_scenario(sc: &StageScenario) -> Check {
    let documents = docs(8);
    let table: BTreeMap<usize, Scripted> = sc.scores.iter().copied().collect();
    let evaluator =
        |k: usize, d: &[String]| -> Result<CandidateEvaluation, TuningError> { Ok(evaluation(k, d, table[&k])) };
    let config = TunerConfig { delta: sc.delta, delta_mode: sc.mode, ..TunerConfig::default() };
    let candidates: Vec<usize> = table.keys().copied().collect();
    let outcome = run_stage(1, Budget::All, &candidates, &documents, &evaluator, &config).unwrap();
    let eliminated: Vec<(usize, usize)> = outcome.eliminated.iter().map(|(k, r)| (*k, r.len())).collect();
    let selected = select(&outcome);
    let ok = outcome.survivors == sc.survivors && eliminated == sc.eliminated && selected == sc.selected;
    Check::new(
        sc.name,
        ok,
        format!(
            "survivors {:?} (expected {:?}), eliminated {:?} (expected {:?}), selected {:?} (expected {:?})",
            outcome.survivors, sc.survivors, eliminated, sc.eliminated, selected, sc.selected
        ),
    )
}

type Script = BTreeMap<(usize, usize), Scripted>;

/// Scores keyed by (subset size, k); subset sizes identify the stage.
fn scripted_tune(script: &Script, config: &TunerConfig, documents: &[String]) -> TuningAudit {
    let evaluator = |k: usize, d: &[String]| -> Result<CandidateEvaluation, TuningError> {
        Ok(evaluation(k, d, script[&(d.len(), k)]))
    };
    tune(documents, &evaluator, config).unwrap()
}

fn multi_stage_scenarios() -> Vec<Check> {
    let documents = docs(6);
    let config = TunerConfig {
        stage_budgets: vec![Budget::Docs(2), Budget::Docs(4), Budget::All],
        ..TunerConfig::default()
    };
    let mut checks = Vec::new();

    let mut script = Script::new();
    for (n, k, x) in [
        (2, 10, s(0.70)),
        (2, 15, s(0.68)),
        (2, 30, s(0.60)),
        (4, 10, s(0.70)),
        (4, 15, s(0.72).failures(1)),
        (6, 10, s(0.71)),
    ] {
        script.insert((n, k), x);
    }
    let audit = scripted_tune(&script, &config, &documents);
    let survivors: Vec<Vec<usize>> = audit.stages.iter().map(|s| s.survivors.clone()).collect();
    let nested = audit.stages.windows(2).all(|w| w[1].documents > w[0].documents);
    checks.push(Check::new(
        "three stages: tolerance reject, then gate reject",
        survivors == vec![vec![10, 15], vec![10], vec![10]] && audit.selected_k == Some(10) && audit.failure.is_none() && nested,
        format!("survivors {survivors:?}, selected {:?}", audit.selected_k),
    ));

    let mut script = Script::new();
    for (n, k, x) in [(2, 10, s(0.7)), (2, 15, s(0.7)), (2, 30, s(0.7)), (4, 10, s(0.7).failures(1)), (4, 15, s(0.7).failures(2)), (4, 30, s(0.7).failures(1))] {
        script.insert((n, k), x);
    }
    let audit = scripted_tune(&script, &config, &documents);
    checks.push(Check::new(
        "all candidates eliminated at stage 2",
        audit.stages.len() == 2 && audit.selected_k.is_none() && audit.failure.is_some(),
        format!("{} stages, selected {:?}, failure {:?}", audit.stages.len(), audit.selected_k, audit.failure),
    ));
    checks
}

pub fn scripted_checks() -> Vec<Check> {
    let mut checks: Vec<Check> = stage_scenarios().iter().map(run_scenario).collect();
    checks.extend(multi_stage_scenarios());
    checks
}

fn floor(config: &TunerConfig, best: f64) -> f64 {
    match config.delta_mode {
        DeltaMode::Absolute => best - config.delta,
        DeltaMode::Relative => best * (1.0 - config.delta),
    }
}

/// Independent re-derivation of one stage's survivor set.
fn expected_survivors(config: &TunerConfig, evaluations: &[CandidateEvaluation]) -> Vec<usize> {
    let gated: Vec<&CandidateEvaluation> = evaluations.iter().filter(|e| e.scores.payload_failures == 0).collect();
    if gated.is_empty() {
        return Vec::new();
    }
    let best_macro = gated.iter().map(|e| e.scores.macro_f1).fold(f64::NEG_INFINITY, f64::max);
    let best_cat: Vec<f64> =
        (0..7).map(|c| gated.iter().map(|e| e.scores.category_f1[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut out: Vec<usize> = gated
        .iter()
        .filter(|e| {
            e.scores.macro_f1 >= floor(config, best_macro)
                && (0..7).all(|c| e.scores.category_f1[c] >= floor(config, best_cat[c]))
        })
        .map(|e| e.k)
        .collect();
    out.sort_unstable();
    out
}

fn random_scores(rng: &mut ChaCha8Rng) -> Scripted {
    // Coarse grid so ties and exact-threshold cases occur.
    let mut grid = || f64::from(rng.random_range(0..=20u32)) / 20.0;
    let macro_f1 = grid();
    let cats = [grid(), grid(), grid(), grid(), grid(), grid(), grid()];
    let compliance = grid();
    let payload_failures = if rng.random_bool(0.15) { rng.random_range(1..4) } else { 0 };
    Scripted { macro_f1, cats, compliance, payload_failures }
}

/// Returns the number of violating scenarios and the first few messages.
pub fn monotone_elimination(runs: usize, seed: u64) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for run in 0..runs {
        let pool = [5usize, 10, 15, 20, 30, 40];
        let mut ks: Vec<usize> = pool.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
        if ks.is_empty() {
            ks.push(15);
        }
        let stages = rng.random_range(1..=4);
        let n_docs = rng.random_range(stages..=12);
        let mut budgets: Vec<Budget> = (1..stages).map(|s| Budget::Docs(s * n_docs / stages)).collect();
        budgets.dedup();
        budgets.retain(|b| *b != Budget::Docs(0));
        budgets.push(Budget::All);
        let config = TunerConfig {
            candidate_ks: ks.clone(),
            delta: f64::from(rng.random_range(5..=10u32)) / 100.0,
            delta_mode: if rng.random_bool(0.5) { DeltaMode::Absolute } else { DeltaMode::Relative },
            stage_budgets: budgets.clone(),
            seed: rng.random(),
        };
        let documents = docs(n_docs);
        let mut script = Script::new();
        for b in &budgets {
            for &k in &ks {
                script.insert((b.resolve(n_docs), k), random_scores(&mut rng));
            }
        }
        let audit = scripted_tune(&script, &config, &documents);

        let mut problems = Vec::new();
        let mut alive: Vec<usize> = {
            let mut v = ks.clone();
            v.sort_unstable();
            v
        };
        for stage in &audit.stages {
            let evaluated: Vec<usize> = {
                let mut v: Vec<usize> = stage.evaluations.iter().map(|e| e.k).collect();
                v.sort_unstable();
                v
            };
            if evaluated != alive {
                problems.push(format!("stage {} evaluated {evaluated:?}, alive {alive:?}", stage.stage));
            }
            if !stage.survivors.iter().all(|k| alive.contains(k)) {
                problems.push(format!("stage {} revived a candidate", stage.stage));
            }
            let gated_survivor = stage.evaluations.iter().any(|e| e.scores.payload_failures > 0 && stage.survivors.contains(&e.k));
            if gated_survivor {
                problems.push(format!("stage {} kept a gated candidate", stage.stage));
            }
            let want = expected_survivors(&config, &stage.evaluations);
            if want != stage.survivors {
                problems.push(format!("stage {} survivors {:?}, oracle {want:?}", stage.stage, stage.survivors));
            }
            alive = stage.survivors.clone();
        }
        let finished = audit.stages.len() == budgets.len();
        match (audit.selected_k, finished && !alive.is_empty()) {
            (Some(k), true) => {
                let last = audit.stages.last().unwrap();
                let score = |k: usize| last.evaluations.iter().find(|e| e.k == k).unwrap().scores;
                let chosen = score(k);
                let beaten = alive.iter().any(|&o| {
                    let x = score(o);
                    (x.macro_f1, x.compliance, std::cmp::Reverse(o)) > (chosen.macro_f1, chosen.compliance, std::cmp::Reverse(k))
                });
                if !alive.contains(&k) || beaten {
                    problems.push(format!("selected k={k} is not the best survivor of {alive:?}"));
                }
            }
            (None, false) => {
                if audit.failure.is_none() {
                    problems.push("elimination without a recorded failure".into());
                }
            }
            (selected, _) => problems.push(format!("selected {selected:?} with survivors {alive:?}")),
        }
        if !problems.is_empty() {
            bad.push(format!("scenario {run}: {}", problems.join(", ")));
        }
    }
    (bad.len(), bad.into_iter().take(5).collect())
}
