//! Model invocation: one trait, several implementations.
//!
//! Every backend turns a [`BackendRequest`] into raw model text. The
//! [`OracleBackend`] answers from a fixed rule table and needs no network;
//! [`RemoteBackend`] speaks the chat-completion wire format; the cassette and
//! scripted backends support replay and fault injection.

mod cassette;
mod limiter;
mod oracle;
mod remote;
mod scripted;

use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use cassette::{CassetteBackend, CassetteEntry, CassetteMode};
pub use limiter::{InFlightLimiter, Permit, TokenBucket};
pub use oracle::{oracle_rules, OracleBackend, PromptKind, PromptView, Rule, RuleEffect, RuleTable};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV, ENDPOINT_ENV};
pub use scripted::{Fault, FaultContext, FaultInjectingBackend, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected (HTTP {status})")]
    Authentication { status: u16 },
    #[error("unusable response: {0}")]
    Protocol(String),
    #[error("no cassette entry for request {0}")]
    CassetteMiss(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// One model call. Sampling temperature is always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub max_output_tokens: u32,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct HashedRequest<'a> {
    model: &'a str,
    system: &'a str,
    user: &'a str,
    temperature: u8,
    max_tokens: u32,
}

impl BackendRequest {
    pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        BackendRequest {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            max_output_tokens: Self::DEFAULT_MAX_OUTPUT_TOKENS,
            timeout: Self::DEFAULT_TIMEOUT,
        }
    }

    pub fn temperature(&self) -> f64 {
        0.0
    }

    /// Hex SHA-256 over model, messages, temperature and token limit. The
    /// timeout is transport configuration and is not part of the key.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&HashedRequest {
            model: &self.model,
            system: &self.system,
            user: &self.user,
            temperature: 0,
            max_tokens: self.max_output_tokens,
        })
        .expect("request serializes");
        hex::encode(Sha256::digest(canonical))
    }
}

/// Raw model output, byte-exact, with transport metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendResponse {
    pub text: String,
    pub latency: Duration,
    pub attempts: u32,
    pub backend: String,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}
