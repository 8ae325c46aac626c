//! Fixed-size, non-overlapping context batches over one document's sentences.

use crate::corpus::SentenceRecord;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BatchError {
    #[error("batch size must be at least 1, got {0}")]
    InvalidSize(usize),
    #[error("document {doc_id}: {detail}")]
    Integrity { doc_id: String, detail: String },
}

/// `k` consecutive sentences of one document, presented together in a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextBatch<'a> {
    pub doc_id: &'a str,
    /// 1-based position of the batch within its document.
    pub batch_index: usize,
    pub sentences: &'a [SentenceRecord],
    pub k: usize,
}

impl ContextBatch<'_> {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Stable identifier used by checkpoints: `doc_id#batch_index`.
    pub fn key(&self) -> String {
        format!("{}#{}", self.doc_id, self.batch_index)
    }
}

/// Splits one document into batches `W_j = s_{(j-1)k+1} .. s_{jk}`; the last
/// batch holds the remainder. Input must be a single document sorted by
/// `sent_index` with indices `0..n`.
pub fn partition(records: &[SentenceRecord], k: usize) -> Result<Vec<ContextBatch<'_>>, BatchError> {
    if k == 0 {
        return Err(BatchError::InvalidSize(k));
    }
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    for (i, r) in records.iter().enumerate() {
        if r.doc_id != first.doc_id {
            return Err(BatchError::Integrity {
                doc_id: first.doc_id.clone(),
                detail: format!("record from document {} mixed in", r.doc_id),
            });
        }
        if r.sent_index != i {
            return Err(BatchError::Integrity {
                doc_id: first.doc_id.clone(),
                detail: format!("position {i} holds sent_index {}", r.sent_index),
            });
        }
    }
    Ok(records
        .chunks(k)
        .enumerate()
        .map(|(j, sentences)| ContextBatch {
            doc_id: &first.doc_id,
            batch_index: j + 1,
            sentences,
            k,
        })
        .collect())
}

/// Partitions every document of a canonically sorted corpus (see
/// [`crate::corpus::canonicalize`]). Batches never span two documents.
pub fn partition_corpus(records: &[SentenceRecord], k: usize) -> Result<Vec<ContextBatch<'_>>, BatchError> {
    if k == 0 {
        return Err(BatchError::InvalidSize(k));
    }
    let mut out = Vec::new();
    for doc in records.chunk_by(|a, b| a.doc_id == b.doc_id) {
        out.extend(partition(doc, k)?);
    }
    Ok(out)
}
