//! Seeded generator for small span-annotated discharge corpora.
//!
//! Documents follow the usual layout: a hospital-course narrative, a
//! discharge medication list, discharge instructions and follow-up
//! instructions, each under its own header line. Spans cover part of each
//! labeled sentence, so labels reach sentences only through interval
//! intersection. Every fourth document ships explicit sentence offsets.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{parse_document, ActionCategory, AnnotationSpan, DischargeDocument, LabelSet};

use ActionCategory::*;

/// Seed and size of the corpus bundled under `data/`.
pub const BUNDLED_SEED: u64 = 1136;
pub const BUNDLED_DOCUMENTS: usize = 32;

const BUNDLED: &str = include_str!("../data/synthetic_docs.jsonl");

/// The bundled corpus.
pub fn bundled_documents() -> Vec<DischargeDocument> {
    BUNDLED
        .lines()
        .enumerate()
        .map(|(i, line)| parse_document(line, i + 1).expect("bundled corpus is valid"))
        .collect()
}

type Entry = (&'static str, &'static [ActionCategory]);

const NARRATIVE: &[&str] = &[
    "The patient is a 67 year old man admitted with shortness of breath.",
    "He was found to have a right lower lobe pneumonia on admission.",
    "She was treated with intravenous antibiotics with steady improvement.",
    "Blood cultures were negative throughout the admission.",
    "His creatinine peaked at 1.9 and returned to baseline with fluids.",
    "Cardiology was consulted for new atrial fibrillation.",
    "An echocardiogram showed a preserved ejection fraction.",
    "Pain was controlled with oral medications.",
    "She remained afebrile for the final 48 hours of her stay.",
    "Physical therapy evaluated him and recommended home services.",
    "He tolerated a regular diet without nausea.",
    "The surgical wound was clean and dry at the time of discharge.",
    "Her blood pressure was well controlled on the current regimen.",
    "Telemetry showed no further arrhythmias.",
    "Oxygen was weaned to room air by hospital day four.",
    "The patient was hemodynamically stable throughout the stay.",
    "A chest film on the second day showed improving infiltrates.",
    "Urine output remained adequate.",
    "Her mental status returned to baseline.",
    "Home medications were resumed on hospital day two.",
    "He denied chest pain at rest or with exertion.",
    "The family was updated daily on her progress.",
    "She ambulated in the hallway without assistance.",
    "Discharged on Atorvastatin 40 mg daily and Aspirin 81 mg.",
];

const MEDS_PLAIN: &[&str] = &[
    "Aspirin 81 mg PO daily",
    "Enalapril 10 mg PO daily",
    "Prostigmin 15 mg PO three times daily",
    "Oxycodone 5 mg PO every 6 hours as needed for pain",
    "Combivent 2 puffs inhaled four times daily",
    "Tylenol 650 mg PO every 6 hours as needed",
    "Metoprolol succinate 50 mg PO daily",
    "Atorvastatin 40 mg PO at bedtime",
    "Omeprazole 20 mg PO daily",
];

const MEDS_LABELED: &[Entry] = &[
    ("Levofloxacin 500 mg PO daily for 7 more days", &[Medication]),
    ("Flagyl 500 mg PO three times daily for 10 more days", &[Medication]),
    ("Prednisone taper as directed over the next 2 weeks", &[Medication]),
    ("Furosemide 40 mg PO daily, start on Monday", &[Medication]),
];

const INSTRUCTIONS_PLAIN: &[&str] = &[
    "You were admitted to the hospital with pneumonia.",
    "It was a pleasure taking care of you.",
    "You were treated with antibiotics and your breathing improved.",
    "Your blood pressure was normal during this stay.",
];

const INSTRUCTIONS_LABELED: &[Entry] = &[
    ("Please call your doctor if you develop fever or chest pain.", &[PatientInstructions]),
    ("Do not lift anything heavier than 10 pounds for six weeks.", &[PatientInstructions]),
    ("Weigh yourself every morning and call if your weight increases by 3 pounds.", &[PatientInstructions]),
    ("Avoid driving while taking oxycodone.", &[PatientInstructions]),
    ("Keep your incision clean and dry.", &[PatientInstructions, Procedure]),
    ("Please take all antibiotics until they are finished.", &[Medication, PatientInstructions]),
    ("***STOPPED: Lasix, please stop taking this medication", &[PatientInstructions]),
    ("The patient was instructed to hold ASA and refrain from NSAIDs for 2 weeks.", &[Medication]),
];

const FOLLOWUP_PLAIN: &[&str] = &["Follow up with your primary care provider as needed for any new concerns."];

const FOLLOWUP_LABELED: &[Entry] = &[
    ("Please arrive at 11 am for X-rays before your visit.", &[Appointment, Imaging]),
    ("The patient requires a neurology consult at XYZ for evaluation.", &[Appointment]),
    (
        "We ask that the patient's family physician repeat these tests in 2 weeks to ensure resolution.",
        &[Lab],
    ),
    ("Please follow up with your cardiologist in 2 weeks.", &[Appointment]),
    ("Your PICC line should be removed by the visiting nurse after the last antibiotic dose.", &[Procedure]),
    ("Please have your INR checked on Friday.", &[Lab]),
    ("A repeat CT scan of the chest is recommended in 6 weeks.", &[Imaging]),
    ("The clinic can be reached at 555-0100 to confirm the appointment time.", &[Appointment, OtherContext]),
];

const WARFARIN: Entry = ("Warfarin anticoagulation was initiated with a goal INR between 1.5-2.5.", &[Lab]);
const PAST_TENSE_LABELED: Entry =
    ("Eventually, ampicillin was discontinued, and the patient was continued on levo and Flagyl.", &[Medication]);
const PAST_TENSE_PLAIN: &str = "He was continued on an aspirin and an ACE.";

/// One planned sentence: text, gold labels, and whether a line break (not a
/// space) precedes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedSentence {
    pub text: String,
    pub labels: LabelSet,
    pub new_line: bool,
}

fn planned(text: &str, labels: &[ActionCategory], new_line: bool) -> PlannedSentence {
    PlannedSentence { text: text.to_string(), labels: labels.iter().copied().collect(), new_line }
}

/// The sentence plan of document `n`.
fn plan(n: usize, rng: &mut ChaCha8Rng) -> (String, Vec<PlannedSentence>) {
    let doc_id = if n == 1 { "1799".to_string() } else { format!("{}", 30001 + n) };
    let mut out = vec![planned("Hospital Course:", &[], true)];

    let count = rng.random_range(8..=13);
    let mut narrative: Vec<&str> = NARRATIVE.choose_multiple(rng, count).copied().collect();
    let mut extra: Vec<Entry> = Vec::new();
    if n == 0 {
        narrative.retain(|s| !s.starts_with("Discharged on"));
        narrative.push("Discharged on Atorvastatin 40 mg daily and Aspirin 81 mg.");
    }
    if n == 1 {
        extra.push(PAST_TENSE_LABELED);
        extra.push((PAST_TENSE_PLAIN, &[]));
    }
    if n == 2 || rng.random_bool(0.12) {
        extra.push(WARFARIN);
    }
    let mut narrative: Vec<Entry> = narrative.into_iter().map(|s| (s, &[][..])).collect();
    for e in extra {
        let at = rng.random_range(0..=narrative.len());
        narrative.insert(at, e);
    }
    let paragraph_break = narrative.len() / 2;
    for (i, (text, labels)) in narrative.into_iter().enumerate() {
        out.push(planned(text, labels, i == 0 || i == paragraph_break));
    }

    out.push(planned("Discharge Medications:", &[], true));
    let meds = rng.random_range(4..=7);
    let plain: Vec<&str> = MEDS_PLAIN.choose_multiple(rng, meds).copied().collect();
    let labeled: Vec<Entry> = MEDS_LABELED.choose_multiple(rng, meds).copied().collect();
    for (p, l) in plain.into_iter().zip(labeled) {
        let (t, labels) = if rng.random_bool(0.12) { l } else { (p, &[][..]) };
        out.push(planned(t, labels, true));
    }

    out.push(planned("Discharge Instructions:", &[], true));
    let mut instructions: Vec<Entry> = Vec::new();
    if n == 0 {
        instructions.push(INSTRUCTIONS_LABELED[7]);
    }
    let count = rng.random_range(2..=4);
    let plain: Vec<&str> = INSTRUCTIONS_PLAIN.choose_multiple(rng, count).copied().collect();
    let labeled: Vec<Entry> = INSTRUCTIONS_LABELED.choose_multiple(rng, count).copied().collect();
    for (p, l) in plain.into_iter().zip(labeled) {
        let pick = if rng.random_bool(0.4) { l } else { (p, &[][..]) };
        if !instructions.contains(&pick) {
            instructions.push(pick);
        }
    }
    for (i, (t, l)) in instructions.into_iter().enumerate() {
        out.push(planned(t, l, i == 0));
    }

    out.push(planned("Followup Instructions:", &[], true));
    let mut followup: Vec<Entry> = Vec::new();
    if n == 0 {
        followup.extend([FOLLOWUP_LABELED[0], FOLLOWUP_LABELED[1], FOLLOWUP_LABELED[2], (FOLLOWUP_PLAIN[0], &[])]);
    } else {
        if rng.random_bool(0.8) {
            followup.push(*FOLLOWUP_LABELED.choose(rng).expect("non-empty"));
        }
        if rng.random_bool(0.5) {
            followup.push((FOLLOWUP_PLAIN[0], &[]));
        }
        if followup.is_empty() {
            followup.push((FOLLOWUP_PLAIN[0], &[]));
        }
    }
    for (i, (t, l)) in followup.into_iter().enumerate() {
        out.push(planned(t, l, i == 0));
    }
    // The segmenter only cuts inline after terminal punctuation followed by a
    // capital letter; anything else needs its own line.
    for i in 1..out.len() {
        let prev_ends = out[i - 1].text.ends_with(['.', '?', '!']);
        let capital = out[i].text.starts_with(|c: char| c.is_uppercase());
        if !prev_ends || !capital {
            out[i].new_line = true;
        }
    }
    (doc_id, out)
}

/// Lays out a plan as text, with one partial span per label of every
/// labeled sentence.
fn render(doc_id: String, plan: &[PlannedSentence], with_offsets: bool, rng: &mut ChaCha8Rng) -> DischargeDocument {
    let mut text = String::new();
    let mut pos = 0usize;
    let mut offsets = Vec::with_capacity(plan.len());
    let mut spans = Vec::new();
    for (i, s) in plan.iter().enumerate() {
        if i > 0 {
            text.push(if s.new_line { '\n' } else { ' ' });
            pos += 1;
        }
        let len = s.text.chars().count();
        let (start, end) = (pos, pos + len);
        offsets.push((start, end));
        text.push_str(&s.text);
        pos = end;
        for &label in &s.labels {
            let lead = rng.random_range(0..=len / 3);
            let trail = rng.random_range(0..=len / 3);
            spans.push(AnnotationSpan { start: start + lead, end: end - trail, labels: LabelSet::from([label]) });
        }
    }
    DischargeDocument { doc_id, text, spans, sentence_offsets: with_offsets.then_some(offsets) }
}

/// Generates `documents` documents and their sentence plans.
pub fn generate_with_plans(documents: usize, seed: u64) -> Vec<(DischargeDocument, Vec<PlannedSentence>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..documents)
        .map(|n| {
            let (doc_id, sentences) = plan(n, &mut rng);
            let doc = render(doc_id, &sentences, n % 4 == 3, &mut rng);
            (doc, sentences)
        })
        .collect()
}

pub fn generate(documents: usize, seed: u64) -> Vec<DischargeDocument> {
    generate_with_plans(documents, seed).into_iter().map(|(d, _)| d).collect()
}
