//! Message schema shared with the browser front end.
//!
//! Every message is self-contained: a protocol version, a correlation id and
//! a kind-tagged payload. Requests are answered by their response kind or by
//! an `error` message carrying the same correlation id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::findings::Finding;
use crate::gateway::Tier;
use crate::mitigation::RewriteResult;
use crate::plugin::{AnalysisRequest, AnalysisResult};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Tweet,
    GenericBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentBlock {
    /// Stable across re-renders of the same page element.
    pub block_id: String,
    pub source: SourceKind,
    pub text: String,
    /// Opaque reference back to the page element.
    pub anchor: String,
    /// Fraction of the block inside the viewport, in [0, 1].
    pub visibility: f64,
}

impl ContentBlock {
    pub fn validate(&self) -> Result<(), MessageError> {
        if self.block_id.is_empty() {
            return Err(MessageError::Invalid("block_id is empty".into()));
        }
        if self.text.is_empty() {
            return Err(MessageError::Invalid(format!("block {} has empty text", self.block_id)));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(MessageError::Invalid(format!(
                "block {} visibility {} outside [0, 1]",
                self.block_id, self.visibility
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoAnalyze {
    #[default]
    Off,
    Rewrite,
    Hide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub sensitivity: f64,
    pub enabled_plugins: Vec<String>,
    pub backend_tier: Tier,
    /// Only meaningful for the API tiers.
    pub endpoint: Option<String>,
    pub auto_analyze: AutoAnalyze,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sensitivity: 0.5,
            enabled_plugins: vec!["cbt-regex".to_string()],
            backend_tier: Tier::Pattern,
            endpoint: None,
            auto_analyze: AutoAnalyze::Off,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), MessageError> {
        if !(0.0..=1.0).contains(&self.sensitivity) {
            return Err(MessageError::Invalid(format!("sensitivity {} outside [0, 1]", self.sensitivity)));
        }
        if self.backend_tier.network_allowed() && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(MessageError::Invalid(format!("tier {} needs an endpoint", self.backend_tier)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum UiPayload {
    BlocksUpdated {
        blocks: Vec<ContentBlock>,
    },
    ViewportChanged {
        /// `None` when no block is visible.
        block_id: Option<String>,
    },
    AnalyzeRequest {
        block_id: String,
        request: AnalysisRequest,
    },
    AnalysisResult {
        block_id: String,
        result: AnalysisResult,
    },
    RewriteRequest {
        block_id: String,
        text: String,
        #[serde(default)]
        findings: Vec<Finding>,
    },
    RewriteApplied {
        block_id: String,
        original: String,
        result: RewriteResult,
    },
    RestoreRequest {
        block_id: String,
    },
    SettingsChanged {
        settings: Settings,
    },
    Error {
        message: String,
        /// Kind of the request that failed, when known.
        #[serde(default)]
        request_kind: Option<String>,
    },
}

pub const MESSAGE_KINDS: [&str; 9] = [
    "blocks-updated",
    "viewport-changed",
    "analyze-request",
    "analysis-result",
    "rewrite-request",
    "rewrite-applied",
    "restore-request",
    "settings-changed",
    "error",
];

impl UiPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            UiPayload::BlocksUpdated { .. } => "blocks-updated",
            UiPayload::ViewportChanged { .. } => "viewport-changed",
            UiPayload::AnalyzeRequest { .. } => "analyze-request",
            UiPayload::AnalysisResult { .. } => "analysis-result",
            UiPayload::RewriteRequest { .. } => "rewrite-request",
            UiPayload::RewriteApplied { .. } => "rewrite-applied",
            UiPayload::RestoreRequest { .. } => "restore-request",
            UiPayload::SettingsChanged { .. } => "settings-changed",
            UiPayload::Error { .. } => "error",
        }
    }
}

/// Success kind answering a request kind, or `None` for non-request kinds.
/// A restore is answered by re-announcing the restored block.
pub fn response_kind(request_kind: &str) -> Option<&'static str> {
    match request_kind {
        "analyze-request" => Some("analysis-result"),
        "rewrite-request" => Some("rewrite-applied"),
        "restore-request" => Some("blocks-updated"),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiMessage {
    pub version: u32,
    pub correlation_id: String,
    #[serde(flatten)]
    pub body: UiPayload,
}

impl UiMessage {
    pub fn new(correlation_id: impl Into<String>, body: UiPayload) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            correlation_id: correlation_id.into(),
            body,
        }
    }

    /// Error reply to `self`, sharing its correlation id.
    pub fn error_reply(&self, message: impl Into<String>) -> Self {
        Self::new(
            self.correlation_id.clone(),
            UiPayload::Error {
                message: message.into(),
                request_kind: Some(self.body.kind().to_string()),
            },
        )
    }

    pub fn is_request(&self) -> bool {
        response_kind(self.body.kind()).is_some()
    }

    /// True when `reply` answers `self`: same correlation id and either the
    /// matching response kind or an error.
    pub fn is_answered_by(&self, reply: &UiMessage) -> bool {
        reply.correlation_id == self.correlation_id
            && (matches!(reply.body, UiPayload::Error { .. }) || response_kind(self.body.kind()) == Some(reply.body.kind()))
    }
}

#[derive(Debug, Error)]
pub enum MessageError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid message: {0}")]
    Invalid(String),
}

/// Decodes one message. Unknown kinds yield `Ok(None)` so the caller can
/// ignore them; newer protocol versions are rejected.
pub fn decode_message(json: &str) -> Result<Option<UiMessage>, MessageError> {
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| MessageError::Malformed(e.to_string()))?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| MessageError::Malformed("missing kind".into()))?;
    if !MESSAGE_KINDS.contains(&kind) {
        return Ok(None);
    }
    let message: UiMessage = serde_json::from_value(value).map_err(|e| MessageError::Malformed(e.to_string()))?;
    if message.version > PROTOCOL_VERSION || message.version == 0 {
        return Err(MessageError::UnsupportedVersion(message.version));
    }
    if message.correlation_id.is_empty() {
        return Err(MessageError::Invalid("correlation_id is empty".into()));
    }
    match &message.body {
        UiPayload::BlocksUpdated { blocks } => blocks.iter().try_for_each(ContentBlock::validate)?,
        UiPayload::SettingsChanged { settings } => settings.validate()?,
        _ => {}
    }
    Ok(Some(message))
}
