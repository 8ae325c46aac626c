//! Append-only run checkpoint: a header line naming the run settings, then
//! one JSON line per completed batch.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BatchOutcome, PipelineError};
use crate::prompts::PromptVersion;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: PromptVersion,
    pub k: usize,
    pub model: String,
    pub backend: String,
}

pub struct Checkpoint {
    path: PathBuf,
    file: File,
    completed: HashMap<String, BatchOutcome>,
}

fn err(path: &Path, detail: impl ToString) -> PipelineError {
    PipelineError::Checkpoint { path: path.to_path_buf(), detail: detail.to_string() }
}

impl Checkpoint {
    /// Opens or creates a checkpoint. An existing file must carry the same
    /// header. A torn final line (from a crash mid-write) is ignored.
    pub fn open(path: &Path, header: &CheckpointHeader) -> Result<Checkpoint, PipelineError> {
        let mut completed = HashMap::new();
        let exists = path.exists() && std::fs::metadata(path).map_err(|e| err(path, e))?.len() > 0;
        if exists {
            let reader = BufReader::new(File::open(path).map_err(|e| err(path, e))?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(|e| err(path, e))?;
            let found: CheckpointHeader =
                serde_json::from_str(&lines[0]).map_err(|e| err(path, format!("bad header: {e}")))?;
            if &found != header {
                return Err(err(
                    path,
                    format!("written for {found:?}, current run is {header:?}; remove it to start over"),
                ));
            }
            let last = lines.len() - 1;
            for (n, line) in lines.iter().enumerate().skip(1) {
                match serde_json::from_str::<BatchOutcome>(line) {
                    Ok(outcome) => {
                        completed.insert(outcome.key.clone(), outcome);
                    }
                    Err(_) if n == last => log::warn!("{}: ignoring torn final line", path.display()),
                    Err(e) => return Err(err(path, format!("line {}: {e}", n + 1))),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| err(path, e))?;
        if !exists {
            let line = serde_json::to_string(header).expect("header serializes");
            writeln!(file, "{line}").and_then(|_| file.flush()).map_err(|e| err(path, e))?;
        }
        Ok(Checkpoint { path: path.to_path_buf(), file, completed })
    }

    pub fn completed(&self) -> HashMap<String, BatchOutcome> {
        self.completed.clone()
    }

    pub fn append(&mut self, outcome: &BatchOutcome) -> Result<(), PipelineError> {
        let line = serde_json::to_string(outcome).expect("outcome serializes");
        writeln!(self.file, "{line}").and_then(|_| self.file.flush()).map_err(|e| err(&self.path, e))
    }
}
