use clinact::corpus::{self, ActionCategory, LabelSet, SentenceRecord};
use clinact::synthetic;

/// The six worked examples with their published stage-2 labels, typed in
/// from the source table rather than taken from the crate.
pub fn reference_table() -> Vec<(&'static str, Vec<ActionCategory>)> {
    use ActionCategory::*;
    vec![
        ("The patient was instructed to hold ASA and refrain from NSAIDs for 2 weeks.", vec![Medication]),
        ("Discharged on Atorvastatin 40 mg daily and Aspirin 81 mg.", vec![]),
        ("The patient requires a neurology consult at XYZ for evaluation.", vec![Appointment]),
        ("Follow up with your primary care provider as needed for any new concerns.", vec![]),
        ("We ask that the patient's family physician repeat these tests in 2 weeks to ensure resolution.", vec![Lab]),
        ("Please arrive at 11 am for X-rays before your visit.", vec![Appointment, Imaging]),
    ]
}

pub fn reference_records() -> Vec<SentenceRecord> {
    reference_table()
        .into_iter()
        .enumerate()
        .map(|(i, (text, labels))| SentenceRecord {
            doc_id: "reference".into(),
            sent_index: i,
            tokens: text.split_whitespace().map(String::from).collect(),
            true_labels: labels.into_iter().collect::<LabelSet>(),
        })
        .collect()
}

pub fn bundled_records() -> Vec<SentenceRecord> {
    let mut records = corpus::preprocess(&synthetic::bundled_documents()).expect("bundled corpus preprocesses");
    corpus::canonicalize(&mut records).expect("canonical");
    records
}
