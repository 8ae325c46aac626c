//! Prediction file: `doc_id,sent_index,predicted_labels,stage1_verdict,
//! stage1_compliant,stage2_compliant`. The label cell is a quoted JSON array;
//! an empty `stage2_compliant` cell means the sentence never reached stage 2.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use super::PredictionRecord;
use crate::corpus::io::{csv_cell, labels_cell, parse_labels_cell};
use crate::corpus::CorpusError;
use crate::prompts::Verdict;

pub const PREDICTION_HEADER: &str =
    "doc_id,sent_index,predicted_labels,stage1_verdict,stage1_compliant,stage2_compliant";

pub fn write_predictions_to<W: Write>(predictions: &[PredictionRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PREDICTION_HEADER}")?;
    for p in predictions {
        let stage2 = match p.stage2_compliant {
            Some(c) => c.to_string(),
            None => String::new(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_cell(&p.doc_id),
            p.sent_index,
            labels_cell(&p.predicted_labels),
            p.stage1_verdict,
            p.stage1_compliant,
            stage2
        )?;
    }
    out.flush()
}

pub fn write_predictions(predictions: &[PredictionRecord], path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_predictions_to(predictions, std::io::BufWriter::new(file)).map_err(|e| CorpusError::io(path, e))
}

fn parse_bool(cell: &str, row: usize, column: &str) -> Result<bool, CorpusError> {
    match cell {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CorpusError::Parse { row, message: format!("{column}: expected true or false, got `{other}`") }),
    }
}

pub fn read_predictions_from<R: Read>(input: R) -> Result<Vec<PredictionRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| CorpusError::Parse { row: 1, message: e.to_string() })?,
        None => return Err(CorpusError::Parse { row: 1, message: "empty prediction file".into() }),
    };
    if header.iter().collect::<Vec<_>>().join(",") != PREDICTION_HEADER {
        return Err(CorpusError::Parse { row: 1, message: format!("expected header `{PREDICTION_HEADER}`") });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rows.enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| CorpusError::Parse { row: row_no, message: e.to_string() })?;
        if row.len() != 6 {
            return Err(CorpusError::Parse { row: row_no, message: format!("expected 6 fields, found {}", row.len()) });
        }
        let sent_index: usize = row[1]
            .parse()
            .map_err(|_| CorpusError::Parse { row: row_no, message: format!("bad sent_index `{}`", &row[1]) })?;
        let stage1_verdict = Verdict::parse_normalized(&row[3])
            .ok_or_else(|| CorpusError::Parse { row: row_no, message: format!("bad verdict `{}`", &row[3]) })?;
        let stage2_compliant = match &row[5] {
            "" => None,
            cell => Some(parse_bool(cell, row_no, "stage2_compliant")?),
        };
        let record = PredictionRecord {
            doc_id: row[0].to_string(),
            sent_index,
            predicted_labels: parse_labels_cell(&row[2], row_no)?,
            stage1_verdict,
            stage1_compliant: parse_bool(&row[4], row_no, "stage1_compliant")?,
            stage2_compliant,
        };
        if !seen.insert((record.doc_id.clone(), sent_index)) {
            return Err(CorpusError::DuplicateKey { row: row_no, doc_id: record.doc_id, sent_index });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_predictions_from(std::io::BufReader::new(file))
}
