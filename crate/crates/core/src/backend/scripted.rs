//! Test doubles: a fixed response queue and a fault injector.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::Value;

use super::oracle::{PromptKind, PromptView};
use super::{Backend, BackendError, BackendRequest, BackendResponse};
use crate::prompts::REPAIR_INSTRUCTION;

/// Returns queued results in order and records every request it receives.
/// An exhausted queue answers with a protocol error.
pub struct ScriptedBackend {
    id: String,
    queue: Mutex<VecDeque<Result<String, BackendError>>>,
    calls: Mutex<Vec<BackendRequest>>,
}

impl ScriptedBackend {
    pub fn new<I>(script: I) -> Self
    where
        I: IntoIterator<Item = Result<String, BackendError>>,
    {
        ScriptedBackend {
            id: "scripted".into(),
            queue: Mutex::new(script.into_iter().collect()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn calls(&self) -> Vec<BackendRequest> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.calls.lock().expect("calls lock").push(request.clone());
        let next = self.queue.lock().expect("queue lock").pop_front();
        match next {
            Some(Ok(text)) => Ok(BackendResponse { text, latency: Duration::ZERO, attempts: 1, backend: self.id.clone() }),
            Some(Err(e)) => Err(e),
            None => Err(BackendError::Protocol("script exhausted".into())),
        }
    }
}

/// What the fault selector sees about a request.
#[derive(Debug, Clone)]
pub struct FaultContext {
    pub kind: PromptKind,
    /// Sentence indices listed in the prompt.
    pub indices: Vec<usize>,
    pub first_sentence: Option<String>,
    /// The prompt carries the repair instruction.
    pub is_retry: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Cut the response in half.
    Truncate,
    /// Remove the entry for this index.
    DropIndex(usize),
    /// Replace this index's labels with a name outside the taxonomy.
    UnknownLabel(usize),
    /// Replace this index's verdict with an unrecognized value.
    BadVerdict(usize),
    /// Wrap the response in a markdown code fence.
    Fence,
    /// Fail the call outright.
    Error(BackendError),
}

/// Wraps a backend and corrupts the responses the selector picks.
pub struct FaultInjectingBackend<B, F> {
    inner: B,
    select: F,
}

impl<B, F> FaultInjectingBackend<B, F>
where
    B: Backend,
    F: Fn(&FaultContext) -> Option<Fault> + Send + Sync,
{
    pub fn new(inner: B, select: F) -> Self {
        FaultInjectingBackend { inner, select }
    }
}

fn edit_entry(text: &str, index: usize, edit: impl Fn(&mut serde_json::Map<String, Value>) -> bool) -> String {
    let Ok(mut value) = serde_json::from_str::<Value>(text) else {
        return text.to_string();
    };
    if let Some(results) = value.get_mut("results").and_then(Value::as_array_mut) {
        results.retain_mut(|entry| match entry.as_object_mut() {
            Some(obj) if obj.get("index").and_then(Value::as_u64) == Some(index as u64) => edit(obj),
            _ => true,
        });
    }
    value.to_string()
}

fn apply(fault: &Fault, text: String) -> String {
    match fault {
        Fault::Truncate => {
            let half = text.chars().count() / 2;
            text.chars().take(half).collect()
        }
        Fault::DropIndex(i) => edit_entry(&text, *i, |_| false),
        Fault::UnknownLabel(i) => edit_entry(&text, *i, |obj| {
            obj.insert("labels".into(), Value::from(vec!["Dietary followup"]));
            true
        }),
        Fault::BadVerdict(i) => edit_entry(&text, *i, |obj| {
            obj.insert("verdict".into(), Value::from("Maybe"));
            true
        }),
        Fault::Fence => format!("```json\n{text}\n```"),
        Fault::Error(_) => text,
    }
}

impl<B, F> Backend for FaultInjectingBackend<B, F>
where
    B: Backend,
    F: Fn(&FaultContext) -> Option<Fault> + Send + Sync,
{
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let view = PromptView::parse(&request.user);
        let ctx = FaultContext {
            kind: view.kind,
            indices: view.sentences.iter().map(|(i, _)| *i).collect(),
            first_sentence: view.sentences.first().map(|(_, s)| s.clone()),
            is_retry: request.user.ends_with(REPAIR_INSTRUCTION),
        };
        let fault = (self.select)(&ctx);
        if let Some(Fault::Error(e)) = fault {
            return Err(e);
        }
        let mut response = self.inner.complete(request)?;
        if let Some(fault) = fault {
            response.text = apply(&fault, response.text);
        }
        Ok(response)
    }
}
