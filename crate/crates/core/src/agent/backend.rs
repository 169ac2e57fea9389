//! Language-model backends.
//!
//! The scripted mock reads a fixture file of the form
//!
//! ```json
//! {"records": [{"prompt_pattern": "Import osm file of HITSZ*", "completion_text": "TOOL import_osm ARGS {\"area\": \"HITSZ\"}"}]}
//! ```
//!
//! Patterns are globs (`*` matches any run of characters) tested in order
//! against the text after the last [`PROMPT_MARKER`] in the context.

use std::fmt;
use std::path::PathBuf;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Line prefix that introduces the user's request in a model context.
pub const PROMPT_MARKER: &str = "USER PROMPT:";

/// Environment variable consulted for the remote API key, overriding configuration.
pub const API_KEY_ENV: &str = "RADIOPLAN_API_KEY";
/// Environment variable overriding the remote endpoint.
pub const ENDPOINT_ENV: &str = "RADIOPLAN_ENDPOINT";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("missing API key: set {0} or api_key in the configuration")]
    MissingCredentials(String),
    #[error("model endpoint unreachable: {0}; check the endpoint and retry")]
    Unreachable(String),
    #[error("model endpoint returned HTTP {status}: {message}; retry later or check credentials")]
    Http { status: u16, message: String },
    #[error("malformed model response: {0}")]
    Malformed(String),
    #[error("no fixture record matches prompt {0:?}")]
    FixtureMiss(String),
    #[error("fixture file: {0}")]
    Fixture(String),
    #[error("backend kind {0} is not available in this build")]
    Unsupported(String),
    #[error("model backend unavailable: {0}")]
    Unavailable(String),
}

/// Uniform completion interface.
pub trait ModelBackend: Send {
    fn complete(&self, context: &str) -> Result<String, BackendError>;
    fn kind(&self) -> &'static str;
}

#[derive(Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[serde(alias = "scripted-mock")]
    Mock { fixtures: PathBuf },
    #[serde(alias = "remote-chat-api")]
    Remote {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    60
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mock { fixtures } => f.debug_struct("Mock").field("fixtures", fixtures).finish(),
            Self::Remote { endpoint, model, api_key, timeout_secs } => f
                .debug_struct("Remote")
                .field("endpoint", endpoint)
                .field("model", model)
                .field("api_key", &api_key.as_ref().map(|_| "<redacted>"))
                .field("timeout_secs", timeout_secs)
                .finish(),
        }
    }
}

impl BackendConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Mock { .. } => "mock",
            Self::Remote { .. } => "remote",
        }
    }
}

/// Builds a backend. Remote backends resolve credentials here, before any
/// network traffic.
pub fn model_backend(config: &BackendConfig) -> Result<Box<dyn ModelBackend>, BackendError> {
    model_backend_with_env(config, |k| std::env::var(k).ok())
}

/// [`model_backend`] with an injectable environment lookup.
pub fn model_backend_with_env(
    config: &BackendConfig,
    env: impl Fn(&str) -> Option<String>,
) -> Result<Box<dyn ModelBackend>, BackendError> {
    match config {
        BackendConfig::Mock { fixtures } => Ok(Box::new(MockBackend::from_file(fixtures)?)),
        BackendConfig::Remote { endpoint, model, api_key, timeout_secs } => {
            let key = env(API_KEY_ENV)
                .filter(|k| !k.is_empty())
                .or_else(|| api_key.clone().filter(|k| !k.is_empty()))
                .ok_or_else(|| BackendError::MissingCredentials(API_KEY_ENV.into()))?;
            let endpoint = env(ENDPOINT_ENV).filter(|e| !e.is_empty()).unwrap_or_else(|| endpoint.clone());
            remote(endpoint, model.clone(), key, *timeout_secs)
        }
    }
}

#[cfg(feature = "net")]
fn remote(endpoint: String, model: String, key: String, timeout: u64) -> Result<Box<dyn ModelBackend>, BackendError> {
    Ok(Box::new(RemoteBackend { endpoint, model, key, timeout: std::time::Duration::from_secs(timeout) }))
}

#[cfg(not(feature = "net"))]
fn remote(_: String, _: String, _: String, _: u64) -> Result<Box<dyn ModelBackend>, BackendError> {
    Err(BackendError::Unsupported("remote".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureRecord {
    pub prompt_pattern: String,
    pub completion_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureFile {
    pub records: Vec<FixtureRecord>,
}

/// Replays canned completions keyed by prompt pattern.
#[derive(Debug, Clone)]
pub struct MockBackend {
    records: Vec<(Regex, String)>,
}

fn glob_regex(pattern: &str) -> Regex {
    let body: Vec<String> = pattern.split('*').map(regex::escape).collect();
    Regex::new(&format!("(?s)^{}$", body.join(".*"))).expect("escaped glob is a valid regex")
}

impl MockBackend {
    pub fn new(file: FixtureFile) -> Self {
        Self { records: file.records.into_iter().map(|r| (glob_regex(r.prompt_pattern.trim()), r.completion_text)).collect() }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map(Self::new).map_err(|e| BackendError::Fixture(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// The user's request inside a context: text after the last prompt marker.
pub fn prompt_of(context: &str) -> &str {
    match context.rfind(PROMPT_MARKER) {
        Some(k) => context[k + PROMPT_MARKER.len()..].trim(),
        None => context.trim(),
    }
}

impl ModelBackend for MockBackend {
    fn complete(&self, context: &str) -> Result<String, BackendError> {
        let prompt = prompt_of(context);
        self.records
            .iter()
            .find(|(re, _)| re.is_match(prompt))
            .map(|(_, c)| c.clone())
            .ok_or_else(|| BackendError::FixtureMiss(prompt.to_string()))
    }

    fn kind(&self) -> &'static str {
        "mock"
    }
}

/// Stands in for a backend that could not be built, so a session can still
/// be inspected. Every completion fails with the original reason.
#[derive(Debug, Clone)]
pub struct UnavailableBackend {
    pub reason: String,
}

impl ModelBackend for UnavailableBackend {
    fn complete(&self, _context: &str) -> Result<String, BackendError> {
        Err(BackendError::Unavailable(self.reason.clone()))
    }

    fn kind(&self) -> &'static str {
        "unavailable"
    }
}

/// OpenAI-compatible chat-completions client.
#[cfg(feature = "net")]
pub struct RemoteBackend {
    endpoint: String,
    model: String,
    key: String,
    timeout: std::time::Duration,
}

#[cfg(feature = "net")]
impl ModelBackend for RemoteBackend {
    fn complete(&self, context: &str) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": context}],
        });
        let resp = ureq::post(&url)
            .timeout(self.timeout)
            .set("Authorization", &format!("Bearer {}", self.key))
            .send_json(body);
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let message = r.into_string().unwrap_or_default().chars().take(300).collect();
                return Err(BackendError::Http { status, message });
            }
            Err(e) => return Err(BackendError::Unreachable(e.to_string())),
        };
        let v: serde_json::Value = resp.into_json().map_err(|e| BackendError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }

    fn kind(&self) -> &'static str {
        "remote"
    }
}
