//! Chat-completion client over HTTP(S).

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse, InFlightLimiter, TokenBucket};

pub const API_KEY_ENV: &str = "CLINACT_API_KEY";
pub const ENDPOINT_ENV: &str = "CLINACT_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    /// Transport retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub requests_per_minute: u32,
    pub burst: u32,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            api_key: None,
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            requests_per_minute: 60,
            burst: 5,
            max_in_flight: 4,
        }
    }
}

impl RemoteConfig {
    /// Fills the endpoint and key from the environment when they are unset.
    pub fn with_env(mut self) -> Self {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            self.endpoint = endpoint;
        }
        if self.api_key.is_none() {
            self.api_key = std::env::var(API_KEY_ENV).ok();
        }
        self
    }

    /// Backoff before retry number `retry` (1-based), doubling up to the cap.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(20);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: u8,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Wire body for a request.
pub(crate) fn request_body(request: &BackendRequest) -> String {
    serde_json::to_string(&ChatBody {
        model: &request.model,
        messages: [
            Message { role: "system", content: &request.system },
            Message { role: "user", content: &request.user },
        ],
        temperature: 0,
        max_tokens: request.max_output_tokens,
    })
    .expect("body serializes")
}

pub(crate) fn extract_content(body: &str) -> Result<String, BackendError> {
    let reply: ChatReply = serde_json::from_str(body)
        .map_err(|e| BackendError::Protocol(format!("response is not a chat completion: {e}")))?;
    reply
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Protocol("response has no message content".into()))
}

enum Failure {
    Retryable(BackendError),
    Fatal(BackendError),
}

pub struct RemoteBackend {
    id: String,
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    bucket: TokenBucket,
    in_flight: InFlightLimiter,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.endpoint.is_empty() {
            return Err(BackendError::Config(format!(
                "no endpoint configured (set --endpoint or {ENDPOINT_ENV})"
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            id: format!("remote:{}", config.endpoint),
            bucket: TokenBucket::new(config.requests_per_minute, config.burst),
            in_flight: InFlightLimiter::new(config.max_in_flight),
            config,
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, request: &BackendRequest, attempts: u32) -> Result<String, Failure> {
        self.bucket.acquire();
        let _permit = self.in_flight.acquire();
        let mut builder = self
            .client
            .post(&self.config.endpoint)
            .timeout(request.timeout)
            .header("content-type", "application/json")
            .body(request_body(request));
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                Failure::Retryable(BackendError::Timeout { attempts })
            } else {
                Failure::Retryable(BackendError::Transport { attempts, message: e.to_string() })
            }
        })?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Failure::Fatal(BackendError::Authentication { status: status.as_u16() }));
        }
        let body = response.text().map_err(|e| {
            let err = if e.is_timeout() {
                BackendError::Timeout { attempts }
            } else {
                BackendError::Transport { attempts, message: e.to_string() }
            };
            Failure::Retryable(err)
        })?;
        if !status.is_success() {
            let err = BackendError::Transport { attempts, message: format!("HTTP {status}") };
            let retryable = status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error();
            return Err(if retryable { Failure::Retryable(err) } else { Failure::Fatal(err) });
        }
        extract_content(&body).map_err(Failure::Fatal)
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request, attempts) {
                Ok(text) => {
                    return Ok(BackendResponse {
                        text,
                        latency: started.elapsed(),
                        attempts,
                        backend: self.id.clone(),
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempts > self.config.max_retries => return Err(e),
                Err(Failure::Retryable(e)) => {
                    log::warn!("{}: attempt {attempts} failed: {e}", self.id);
                    std::thread::sleep(self.config.backoff(attempts));
                }
            }
        }
    }
}
