//! Brute-force oracle for sentence label aggregation: a sentence gets a
//! span's labels iff some character position lies in both half-open ranges.

use clinact::corpus::{aggregate_labels, segment, ActionCategory, AnnotationSpan, DischargeDocument, LabelSet};
use clinact::synthetic;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Check;

pub fn brute_force(doc: &DischargeDocument, ranges: &[(usize, usize)]) -> Vec<(Vec<String>, LabelSet)> {
    let chars: Vec<char> = doc.text.chars().collect();
    ranges
        .iter()
        .map(|&(start, end)| {
            let mut labels = LabelSet::new();
            for pos in start..end {
                for span in &doc.spans {
                    if span.start <= pos && pos < span.end {
                        labels.extend(span.labels.iter().copied());
                    }
                }
            }
            let text: String = chars[start..end].iter().collect();
            (text.split_whitespace().map(String::from).collect(), labels)
        })
        .collect()
}

/// Counts sentences where the implementation and the oracle disagree.
pub fn mismatches(doc: &DischargeDocument, ranges: &[(usize, usize)]) -> usize {
    let got = aggregate_labels(doc, ranges).expect("valid document");
    let want = brute_force(doc, ranges);
    if got.len() != want.len() {
        return got.len().max(want.len());
    }
    got.iter().zip(&want).filter(|(g, (tokens, labels))| &g.tokens != tokens || &g.true_labels != labels).count()
}

const ALPHABET: &[char] = &['a', 'b', 'Z', ' ', ' ', '.', '\n', 'é', '漢', '-', '?'];

/// Documents with dense, overlapping and touching spans over multi-byte
/// text, and arbitrary sorted sentence ranges.
pub fn adversarial(rng: &mut ChaCha8Rng, n: usize) -> (DischargeDocument, Vec<(usize, usize)>) {
    let len = rng.random_range(1..400);
    let text: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
    let span_count = rng.random_range(0..12);
    let spans = (0..span_count)
        .map(|_| {
            let start = rng.random_range(0..len);
            let end = rng.random_range(start + 1..=len);
            let label_count = rng.random_range(1..=3);
            let labels = (0..label_count).map(|_| *ActionCategory::ALL.choose(rng).unwrap()).collect();
            AnnotationSpan { start, end, labels }
        })
        .collect();
    let mut cuts: Vec<usize> = (0..rng.random_range(0..20)).map(|_| rng.random_range(0..=len)).collect();
    cuts.extend([0, len]);
    cuts.sort_unstable();
    cuts.dedup();
    let ranges = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    (DischargeDocument { doc_id: format!("adv-{n}"), text, spans, sentence_offsets: None }, ranges)
}

pub const SYNTHETIC_DOCS: usize = 500;
pub const SEED: u64 = 2026;

pub fn span_suites() -> Vec<Check> {
    let docs = synthetic::generate(SYNTHETIC_DOCS, SEED);
    let mut sentences = 0;
    let mut bad = 0;
    for doc in &docs {
        let ranges = segment(doc);
        sentences += ranges.len();
        bad += mismatches(doc, &ranges);
    }
    let mut checks = vec![Check::new(
        format!("{SYNTHETIC_DOCS} seeded synthetic documents"),
        bad == 0 && docs.len() == SYNTHETIC_DOCS,
        format!("{bad} mismatches over {sentences} sentences"),
    )];

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut sentences, mut bad) = (0, 0);
    for n in 0..500 {
        let (doc, ranges) = adversarial(&mut rng, n);
        sentences += ranges.len();
        bad += mismatches(&doc, &ranges);
    }
    checks.push(Check::new("500 adversarial documents", bad == 0, format!("{bad} mismatches over {sentences} sentences")));
    checks
}
