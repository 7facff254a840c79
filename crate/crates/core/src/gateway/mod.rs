//! Tiered inference: pattern, in-browser, local API and cloud API backends.
//!
//! Network I/O is only possible through [`Gateway::send`], which refuses to
//! touch the transport unless the backend's tier allows it.

pub mod cache;
pub mod transport;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, CacheKeyParts, Clock, ManualClock, ResultCache, SystemClock};
pub use transport::{
    FnTransport, HttpRequest, HttpResponse, HttpTransport, Method, NullTransport,
    RecordingTransport, Transcript, TranscriptEntry, TranscriptTransport, Transport,
    TransportError,
};

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

/// Ordered by how far data travels: pattern < in-browser < local-api < cloud-api.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Pattern,
    InBrowser,
    LocalApi,
    CloudApi,
}

impl Tier {
    pub fn network_allowed(self) -> bool {
        matches!(self, Tier::LocalApi | Tier::CloudApi)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Pattern => "pattern",
            Tier::InBrowser => "in-browser",
            Tier::LocalApi => "local-api",
            Tier::CloudApi => "cloud-api",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pattern" => Ok(Tier::Pattern),
            "in-browser" => Ok(Tier::InBrowser),
            "local-api" => Ok(Tier::LocalApi),
            "cloud-api" => Ok(Tier::CloudApi),
            other => Err(format!("unknown tier `{other}`")),
        }
    }
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: String,
    /// Name of the environment variable holding the API key. Never the key itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl BackendConfig {
    pub fn pattern() -> Self {
        Self {
            tier: Tier::Pattern,
            endpoint: None,
            model_id: String::new(),
            credential_env: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn in_browser(model_id: impl Into<String>) -> Self {
        Self {
            tier: Tier::InBrowser,
            model_id: model_id.into(),
            ..Self::pattern()
        }
    }

    pub fn local_api(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            tier: Tier::LocalApi,
            endpoint: Some(endpoint.into()),
            model_id: model_id.into(),
            ..Self::pattern()
        }
    }

    pub fn cloud_api(
        endpoint: impl Into<String>,
        model_id: impl Into<String>,
        credential_env: impl Into<String>,
    ) -> Self {
        Self {
            tier: Tier::CloudApi,
            endpoint: Some(endpoint.into()),
            model_id: model_id.into(),
            credential_env: Some(credential_env.into()),
            ..Self::pattern()
        }
    }

    pub fn with_timeout_ms(mut self, ms: u64) -> Self {
        self.timeout_ms = ms;
        self
    }

    pub fn network_allowed(&self) -> bool {
        self.tier.network_allowed()
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.tier {
            Tier::Pattern | Tier::InBrowser => Ok(()),
            Tier::LocalApi | Tier::CloudApi => {
                if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    return Err(GatewayError::Config(format!(
                        "tier {} requires an endpoint",
                        self.tier
                    )));
                }
                if self.model_id.trim().is_empty() {
                    return Err(GatewayError::Config(format!(
                        "tier {} requires a model id",
                        self.tier
                    )));
                }
                if self.tier == Tier::CloudApi
                    && self.credential_env.as_deref().is_none_or(|c| c.trim().is_empty())
                {
                    return Err(GatewayError::Config(
                        "tier cloud-api requires a credential environment variable".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Stable digest of everything that can change a backend's output.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tier.as_str());
        h.update([0]);
        h.update(self.endpoint.as_deref().unwrap_or(""));
        h.update([0]);
        h.update(&self.model_id);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModelOutput {
    pub text: String,
    pub model_id: String,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("no completion backend for the pattern tier")]
    NoCompletionBackend,
    #[error("tier {0} is unavailable here")]
    TierUnavailable(Tier),
    #[error("privacy violation: network I/O attempted at tier {0}")]
    PrivacyViolation(Tier),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

impl From<TransportError> for GatewayError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Timeout => GatewayError::Timeout,
            TransportError::Io(m) => GatewayError::Transport(m),
        }
    }
}

#[derive(Clone)]
pub struct Gateway {
    transport: Arc<dyn Transport>,
    retries: u32,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("retries", &self.retries)
            .finish_non_exhaustive()
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(Arc::new(HttpTransport::new()))
    }
}

fn chat_completions_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

pub(crate) fn chat_request_body(model_id: &str, prompt: &ChatPrompt) -> String {
    json!({
        "model": model_id,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": 0,
        "n": 1,
    })
    .to_string()
}

fn hash_parts(model: &str, messages: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    h.update(model);
    for (role, content) in messages {
        h.update([0]);
        h.update(role);
        h.update([0]);
        h.update(content);
    }
    hex::encode(h.finalize())
}

/// Hash of a chat-completion request body, as used by transcripts.
pub(crate) fn hash_chat_body(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let model = v.get("model")?.as_str()?;
    let messages = v
        .get("messages")?
        .as_array()?
        .iter()
        .map(|m| {
            Some((
                m.get("role")?.as_str()?.to_string(),
                m.get("content")?.as_str()?.to_string(),
            ))
        })
        .collect::<Option<Vec<_>>>()?;
    Some(hash_parts(model, &messages))
}

/// Transcript key for a prompt sent to `model_id`.
pub fn transcript_hash(model_id: &str, prompt: &ChatPrompt) -> String {
    hash_parts(
        model_id,
        &[
            ("system".to_string(), prompt.system.clone()),
            ("user".to_string(), prompt.user.clone()),
        ],
    )
}

/// A minimal chat-completion response body carrying `content`.
pub fn completion_response_body(model_id: &str, content: &str) -> String {
    json!({
        "object": "chat.completion",
        "model": model_id,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop",
        }],
    })
    .to_string()
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            transport,
            retries: 1,
        }
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    /// The single choke point for outbound traffic.
    pub fn send(
        &self,
        config: &BackendConfig,
        request: &HttpRequest,
    ) -> Result<HttpResponse, GatewayError> {
        if !config.network_allowed() {
            return Err(GatewayError::PrivacyViolation(config.tier));
        }
        let mut attempt = 0;
        loop {
            match self.transport.send(request) {
                Ok(resp) => return Ok(resp),
                Err(TransportError::Io(_)) if attempt < self.retries => attempt += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn complete(
        &self,
        prompt: &ChatPrompt,
        config: &BackendConfig,
    ) -> Result<RawModelOutput, GatewayError> {
        match config.tier {
            Tier::Pattern => return Err(GatewayError::NoCompletionBackend),
            Tier::InBrowser => return Err(GatewayError::TierUnavailable(Tier::InBrowser)),
            Tier::LocalApi | Tier::CloudApi => {}
        }
        config.validate()?;
        let credential = match config.credential_env.as_deref() {
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.trim().is_empty() => Some(key),
                _ if config.tier == Tier::CloudApi => {
                    return Err(GatewayError::Config(format!(
                        "credential environment variable `{var}` is not set"
                    )))
                }
                _ => None,
            },
            None => None,
        };

        let endpoint = config.endpoint.as_deref().unwrap_or_default();
        let mut request = HttpRequest::post_json(
            chat_completions_url(endpoint),
            chat_request_body(&config.model_id, prompt),
            config.timeout(),
        );
        if let Some(key) = credential {
            request = request.header("authorization", format!("Bearer {key}"));
        }

        let started = Instant::now();
        let response = self.send(config, &request)?;
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        if !(200..300).contains(&response.status) {
            return Err(GatewayError::Status {
                status: response.status,
                body: response.body.chars().take(512).collect(),
            });
        }
        let v: Value = serde_json::from_str(&response.body)
            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))?
            .to_string();
        let model_id = v
            .get("model")
            .and_then(Value::as_str)
            .filter(|m| !m.is_empty() && *m != "transcript")
            .unwrap_or(&config.model_id)
            .to_string();
        Ok(RawModelOutput {
            text,
            model_id,
            elapsed_ms,
        })
    }
}
