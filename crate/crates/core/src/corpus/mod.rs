//! Span-annotated discharge documents and their sentence-level view.
//!
//! Documents arrive as JSON lines with character-offset spans. Each document
//! is cut into sentences (or uses the sentence offsets it ships with), and
//! every sentence collects the labels of all spans that intersect it under
//! half-open interval semantics. Offsets count Unicode scalar values, not
//! bytes.

pub(crate) mod io;
mod segment;
mod taxonomy;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use io::{read_records, read_records_from, write_records, write_records_to};
pub use segment::segment;
pub use taxonomy::{label_strings, normalize, ActionCategory, LabelSet, UnknownCategory};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed document: {message}")]
    Document { line: usize, message: String },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: {source}")]
    Taxonomy {
        row: usize,
        #[source]
        source: UnknownCategory,
    },
    #[error("document {doc_id}: {detail}")]
    Integrity { doc_id: String, detail: String },
    #[error("row {row}: duplicate sentence key ({doc_id}, {sent_index})")]
    DuplicateKey {
        row: usize,
        doc_id: String,
        sent_index: usize,
    },
    #[error("rate is undefined for an empty record set")]
    UndefinedRate,
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A labeled character range `[start, end)` of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSpan {
    pub start: usize,
    pub end: usize,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DischargeDocument {
    pub doc_id: String,
    pub text: String,
    pub spans: Vec<AnnotationSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_offsets: Option<Vec<(usize, usize)>>,
}

impl DischargeDocument {
    /// Length of the text in characters.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks span bounds, label presence and sentence offsets.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let integrity = |detail: String| CorpusError::Integrity {
            doc_id: self.doc_id.clone(),
            detail,
        };
        if self.doc_id.is_empty() {
            return Err(integrity("empty doc_id".into()));
        }
        let len = self.char_len();
        for span in &self.spans {
            if span.start >= span.end || span.end > len {
                return Err(integrity(format!(
                    "span [{}, {}) outside document of length {len}",
                    span.start, span.end
                )));
            }
            if span.labels.is_empty() {
                return Err(integrity(format!(
                    "span [{}, {}) has no labels",
                    span.start, span.end
                )));
            }
        }
        if let Some(offsets) = &self.sentence_offsets {
            check_ranges(offsets, len).map_err(integrity)?;
        }
        Ok(())
    }
}

fn check_ranges(ranges: &[(usize, usize)], len: usize) -> Result<(), String> {
    let mut prev_end = 0;
    for (i, &(start, end)) in ranges.iter().enumerate() {
        if start >= end || end > len {
            return Err(format!("sentence range [{start}, {end}) invalid for length {len}"));
        }
        if i > 0 && start < prev_end {
            return Err(format!("sentence range [{start}, {end}) overlaps or is unsorted"));
        }
        prev_end = end;
    }
    Ok(())
}

/// One sentence of one document with its aggregated gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub doc_id: String,
    pub sent_index: usize,
    pub tokens: Vec<String>,
    pub true_labels: LabelSet,
}

impl SentenceRecord {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_actionable(&self) -> bool {
        !self.true_labels.is_empty()
    }
}

#[derive(Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: String,
    text: String,
    #[serde(default)]
    spans: Vec<RawSpan>,
    #[serde(default)]
    sentence_offsets: Option<Vec<(usize, usize)>>,
}

/// Parses one JSON document line. `line` is 1-based and only used for errors.
pub fn parse_document(json: &str, line: usize) -> Result<DischargeDocument, CorpusError> {
    let raw: RawDocument = serde_json::from_str(json).map_err(|e| CorpusError::Document {
        line,
        message: e.to_string(),
    })?;
    let mut spans = Vec::with_capacity(raw.spans.len());
    for span in raw.spans {
        let labels = span
            .labels
            .iter()
            .map(|l| l.parse())
            .collect::<Result<LabelSet, _>>()
            .map_err(|source| CorpusError::Taxonomy { row: line, source })?;
        spans.push(AnnotationSpan {
            start: span.start,
            end: span.end,
            labels,
        });
    }
    let doc = DischargeDocument {
        doc_id: raw.doc_id,
        text: raw.text,
        spans,
        sentence_offsets: raw.sentence_offsets,
    };
    doc.validate()?;
    Ok(doc)
}

/// Loads a JSON-lines document file; blank lines are skipped and doc ids must
/// be unique.
pub fn load_documents(path: &Path) -> Result<Vec<DischargeDocument>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document(&line, i + 1)?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::Integrity {
                doc_id: doc.doc_id,
                detail: "duplicate doc_id".into(),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Documents as JSON lines, one per document, each ending in `\n`.
pub fn documents_to_jsonl(docs: &[DischargeDocument]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("document serializes"));
        out.push('\n');
    }
    out
}

pub fn write_documents(docs: &[DischargeDocument], path: &Path) -> Result<(), CorpusError> {
    std::fs::write(path, documents_to_jsonl(docs)).map_err(|e| CorpusError::io(path, e))
}

/// Builds one record per sentence range. A sentence receives the union of the
/// labels of every span `[a, b)` with `a < end` and `b > start`.
pub fn aggregate_labels(
    document: &DischargeDocument,
    ranges: &[(usize, usize)],
) -> Result<Vec<SentenceRecord>, CorpusError> {
    document.validate()?;
    let chars: Vec<(usize, char)> = document.text.char_indices().collect();
    let len = chars.len();
    check_ranges(ranges, len).map_err(|detail| CorpusError::Integrity {
        doc_id: document.doc_id.clone(),
        detail,
    })?;
    let byte_at = |pos: usize| chars.get(pos).map_or(document.text.len(), |&(b, _)| b);

    let mut by_start: Vec<&AnnotationSpan> = document.spans.iter().collect();
    by_start.sort_by_key(|s| (s.start, s.end));

    // Sweep: ranges are sorted and disjoint, so a span that ends before the
    // current range starts can never touch a later range.
    let mut next = 0;
    let mut active: Vec<&AnnotationSpan> = Vec::new();
    let mut records = Vec::with_capacity(ranges.len());
    for (sent_index, &(start, end)) in ranges.iter().enumerate() {
        while next < by_start.len() && by_start[next].start < end {
            active.push(by_start[next]);
            next += 1;
        }
        active.retain(|s| s.end > start);
        let true_labels: LabelSet = active
            .iter()
            .filter(|s| s.start < end)
            .flat_map(|s| s.labels.iter().copied())
            .collect();
        let text = &document.text[byte_at(start)..byte_at(end)];
        records.push(SentenceRecord {
            doc_id: document.doc_id.clone(),
            sent_index,
            tokens: text.split_whitespace().map(str::to_string).collect(),
            true_labels,
        });
    }
    Ok(records)
}

/// Segments and aggregates every document, in input order.
pub fn preprocess(documents: &[DischargeDocument]) -> Result<Vec<SentenceRecord>, CorpusError> {
    let mut out = Vec::new();
    for doc in documents {
        let ranges = segment(doc);
        out.extend(aggregate_labels(doc, &ranges)?);
    }
    Ok(out)
}

/// Fraction of records with a non-empty gold label set.
pub fn actionable_rate(records: &[SentenceRecord]) -> Result<f64, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::UndefinedRate);
    }
    let labeled = records.iter().filter(|r| r.is_actionable()).count();
    Ok(labeled as f64 / records.len() as f64)
}

/// Sorts records by `(doc_id, sent_index)` and checks that each document's
/// indices run `0..n` without gaps or duplicates.
pub fn canonicalize(records: &mut [SentenceRecord]) -> Result<(), CorpusError> {
    records.sort_by(|a, b| (&a.doc_id, a.sent_index).cmp(&(&b.doc_id, b.sent_index)));
    let mut expected = 0;
    for (i, r) in records.iter().enumerate() {
        if i == 0 || records[i - 1].doc_id != r.doc_id {
            expected = 0;
        }
        if r.sent_index != expected {
            return Err(CorpusError::Integrity {
                doc_id: r.doc_id.clone(),
                detail: format!("expected sent_index {expected}, found {}", r.sent_index),
            });
        }
        expected += 1;
    }
    Ok(())
}
