#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use triggerscope::gateway::{completion_response_body, FnTransport, HttpRequest, HttpResponse, Transport, TransportError};
use triggerscope::llm::extract_embedded_text;
use triggerscope::service::{default_registry, AppState};
use triggerscope::{Analyzer, BackendConfig, Gateway, Taxonomy};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// The text a chat-completion request body asked the model about.
pub fn prompt_text(request: &HttpRequest) -> Option<String> {
    let body: Value = serde_json::from_str(request.body.as_deref()?).ok()?;
    let user = body.pointer("/messages/1/content")?.as_str()?;
    extract_embedded_text(user).map(str::to_string)
}

/// A fake model that flags the first word of whatever text it is shown and
/// rewrites by upper-casing. One reply shape serves every prompt kind.
pub fn echo_model(max_delay_ms: u64) -> Arc<dyn Transport> {
    Arc::new(FnTransport(move |request: &HttpRequest| -> Result<HttpResponse, TransportError> {
        let Some(text) = prompt_text(request) else {
            return Ok(HttpResponse {
                status: 400,
                body: "no embedded text".into(),
            });
        };
        if max_delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(rand::random_range(0..=max_delay_ms)));
        }
        let first = text.split_whitespace().next().unwrap_or_default().to_string();
        let content = json!({
            "findings": [{
                "label": "loaded-language",
                "quote": first,
                "explanation": "stub",
                "severity": "low",
                "confidence": 0.9,
            }],
            "decision": "no",
            "rewritten": text.to_uppercase(),
            "alternatives": [text.to_uppercase(), text.to_lowercase()],
            "rationale": "stub",
        });
        Ok(HttpResponse {
            status: 200,
            body: completion_response_body("stub-model", &content.to_string()),
        })
    }))
}

pub fn stub_backend() -> BackendConfig {
    BackendConfig::local_api("http://stub.invalid/v1", "stub-model")
}

pub fn server_state(transport: Arc<dyn Transport>, backend: BackendConfig) -> AppState {
    let taxonomy = Taxonomy::shipped();
    let registry = default_registry(&taxonomy, None).unwrap();
    AppState::new(
        Analyzer::new(Arc::new(taxonomy), Arc::new(registry), Gateway::new(transport)).with_backend(backend),
    )
}
