//! Record/replay of raw model responses keyed by request hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub response_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Misses are errors; nothing is written.
    Replay,
    /// Misses go to the inner backend and are appended to the file.
    Record,
}

struct State {
    entries: HashMap<String, String>,
    sink: Option<File>,
}

/// Cassette file: one JSON [`CassetteEntry`] per line. Later lines for the
/// same hash override earlier ones.
pub struct CassetteBackend<B> {
    id: String,
    path: PathBuf,
    mode: CassetteMode,
    inner: Option<B>,
    state: Mutex<State>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::Config(format!("cassette {}: {e}", path.display()))
}

fn load(path: &Path) -> Result<HashMap<String, String>, BackendError> {
    let mut entries = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(entries),
        Err(e) => return Err(io_error(path, e)),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry =
            serde_json::from_str(&line).map_err(|e| io_error(path, format!("line {}: {e}", n + 1)))?;
        entries.insert(entry.request_hash, entry.response_text);
    }
    Ok(entries)
}

impl<B: Backend> CassetteBackend<B> {
    /// Replay-only cassette. A missing file behaves as an empty cassette.
    pub fn replay(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let entries = load(&path)?;
        Ok(CassetteBackend {
            id: format!("cassette:{}", path.display()),
            path,
            mode: CassetteMode::Replay,
            inner: None,
            state: Mutex::new(State { entries, sink: None }),
        })
    }

    /// Recording cassette in front of `inner`.
    pub fn record(path: impl Into<PathBuf>, inner: B) -> Result<Self, BackendError> {
        let path = path.into();
        let entries = load(&path)?;
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_error(&path, e))?;
        Ok(CassetteBackend {
            id: inner.id().to_string(),
            path,
            mode: CassetteMode::Record,
            inner: Some(inner),
            state: Mutex::new(State { entries, sink: Some(sink) }),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cassette lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<B: Backend> Backend for CassetteBackend<B> {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let hash = request.hash();
        let hit = self.state.lock().expect("cassette lock").entries.get(&hash).cloned();
        if let Some(text) = hit {
            return Ok(BackendResponse { text, latency: started.elapsed(), attempts: 1, backend: self.id.clone() });
        }
        let inner = match (&self.inner, self.mode) {
            (Some(inner), CassetteMode::Record) => inner,
            _ => return Err(BackendError::CassetteMiss(hash)),
        };
        let response = inner.complete(request)?;
        let line = serde_json::to_string(&CassetteEntry {
            request_hash: hash.clone(),
            response_text: response.text.clone(),
        })
        .expect("entry serializes");
        let mut state = self.state.lock().expect("cassette lock");
        if let Some(sink) = state.sink.as_mut() {
            writeln!(sink, "{line}").and_then(|_| sink.flush()).map_err(|e| io_error(&self.path, e))?;
        }
        state.entries.insert(hash, response.text.clone());
        Ok(response)
    }
}
