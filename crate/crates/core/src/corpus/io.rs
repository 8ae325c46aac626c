//! Sentence interchange file: `doc_id,sent_index,sentence,true_labels`, with
//! the two list cells stored as quoted JSON arrays.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use super::{CorpusError, LabelSet, SentenceRecord};

pub const HEADER: &str = "doc_id,sent_index,sentence,true_labels";

/// Quotes a cell when it holds a delimiter, quote or line break.
pub(crate) fn csv_cell(value: &str) -> String {
    if value.contains([',', '"', '\n', '\r']) {
        quoted(value)
    } else {
        value.to_string()
    }
}

pub(crate) fn quoted(value: &str) -> String {
    format!("\"{}\"", value.replace('"', "\"\""))
}

pub(crate) fn json_list_cell<S: serde::Serialize>(items: &[S]) -> String {
    quoted(&serde_json::to_string(items).expect("list serializes"))
}

pub(crate) fn labels_cell(labels: &LabelSet) -> String {
    json_list_cell(&super::label_strings(labels))
}

/// Parses a JSON-array label cell; unknown strings are taxonomy errors.
pub(crate) fn parse_labels_cell(cell: &str, row: usize) -> Result<LabelSet, CorpusError> {
    let strings: Vec<String> = serde_json::from_str(cell).map_err(|e| CorpusError::Parse {
        row,
        message: format!("label cell is not a JSON string array: {e}"),
    })?;
    strings
        .iter()
        .map(|s| s.parse().map_err(|source| CorpusError::Taxonomy { row, source }))
        .collect()
}

pub fn write_records_to<W: Write>(records: &[SentenceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            csv_cell(&r.doc_id),
            r.sent_index,
            json_list_cell(&r.tokens),
            labels_cell(&r.true_labels)
        )?;
    }
    out.flush()
}

pub fn write_records(records: &[SentenceRecord], path: &Path) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_records_to(records, &mut buf).expect("in-memory write");
    std::fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

/// Reads an interchange file. Row numbers in errors are 1-based data rows
/// (the header is row 0). Duplicate `(doc_id, sent_index)` keys are rejected.
pub fn read_records_from<R: Read>(input: R) -> Result<Vec<SentenceRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse { row: 0, message: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER.split(',').collect::<Vec<_>>() {
        return Err(CorpusError::Parse {
            row: 0,
            message: format!("expected header `{HEADER}`"),
        });
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CorpusError::Parse { row: row_no, message: e.to_string() })?;
        let sent_index = row[1].parse::<usize>().map_err(|e| CorpusError::Parse {
            row: row_no,
            message: format!("sent_index `{}`: {e}", &row[1]),
        })?;
        let tokens: Vec<String> = serde_json::from_str(&row[2]).map_err(|e| CorpusError::Parse {
            row: row_no,
            message: format!("sentence cell is not a JSON string array: {e}"),
        })?;
        let true_labels = parse_labels_cell(&row[3], row_no)?;
        let doc_id = row[0].to_string();
        if !seen.insert((doc_id.clone(), sent_index)) {
            return Err(CorpusError::DuplicateKey { row: row_no, doc_id, sent_index });
        }
        records.push(SentenceRecord { doc_id, sent_index, tokens, true_labels });
    }
    Ok(records)
}

pub fn read_records(path: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_records_from(std::io::BufReader::new(file))
}
