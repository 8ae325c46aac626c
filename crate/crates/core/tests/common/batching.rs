use clinact::batcher::{partition, partition_corpus};
use clinact::corpus::{LabelSet, SentenceRecord};

use super::Check;

pub const KS: [usize; 4] = [1, 10, 15, 30];
pub const MAX_N: usize = 200;

fn document(id: &str, n: usize) -> Vec<SentenceRecord> {
    (0..n)
        .map(|i| SentenceRecord {
            doc_id: id.into(),
            sent_index: i,
            tokens: vec![format!("s{i}")],
            true_labels: LabelSet::new(),
        })
        .collect()
}

/// Returns a description of the first violated property, if any.
fn violation(records: &[SentenceRecord], k: usize) -> Option<String> {
    let n = records.len();
    let batches = match partition(records, k) {
        Ok(b) => b,
        Err(e) => return Some(e.to_string()),
    };
    let expected = n.div_ceil(k);
    if batches.len() != expected {
        return Some(format!("{} batches, expected {expected}", batches.len()));
    }
    let flat: Vec<(&str, usize)> =
        batches.iter().flat_map(|b| b.sentences.iter().map(|s| (s.doc_id.as_str(), s.sent_index))).collect();
    let want: Vec<(&str, usize)> = records.iter().map(|s| (s.doc_id.as_str(), s.sent_index)).collect();
    if flat != want {
        return Some("concatenated batches differ from the input (loss, overlap or reordering)".into());
    }
    for (j, b) in batches.iter().enumerate() {
        let last = j + 1 == batches.len();
        if b.is_empty() || b.len() > k || (!last && b.len() != k) {
            return Some(format!("batch {j} has {} sentences", b.len()));
        }
    }
    None
}

pub fn batching_suites() -> Vec<Check> {
    let mut checks = Vec::new();
    for k in KS {
        let mut failures = Vec::new();
        for n in 0..=MAX_N {
            if let Some(v) = violation(&document("d", n), k) {
                failures.push(format!("n={n}: {v}"));
            }
        }
        checks.push(Check::new(format!("k={k}, n=0..={MAX_N}"), failures.is_empty(), failures.join("; ")));
    }

    // Batches never cross a document boundary.
    let mut corpus = document("a", 23);
    corpus.extend(document("b", 15));
    corpus.extend(document("c", 1));
    let batches = partition_corpus(&corpus, 10).unwrap();
    let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
    let pure = batches.iter().all(|b| b.sentences.iter().all(|s| s.doc_id == b.sentences[0].doc_id));
    checks.push(Check::new(
        "per-document partition",
        pure && sizes == [10, 10, 3, 10, 5, 1],
        format!("sizes {sizes:?}"),
    ));
    checks.push(Check::new("k=0 rejected", partition(&corpus[..3], 0).is_err(), "partition accepted k=0"));
    checks
}
