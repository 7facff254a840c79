//! HTTP contract of the service, exercised in-process and over a real socket.

mod common;

use std::fs;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use triggerscope::gateway::{FnTransport, HttpRequest, HttpResponse, NullTransport, RecordingTransport, TransportError};
use triggerscope::plugin::{AnalysisRequest, AnalysisResult};
use triggerscope::service::messages::{decode_message, response_kind, UiMessage, UiPayload};
use triggerscope::service::{router, RegistryResponse};
use triggerscope::BackendConfig;

use common::{echo_model, fixture, server_state, stub_backend};

fn pattern_app() -> Router {
    router(server_state(Arc::new(NullTransport), BackendConfig::pattern()), None).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() || n.is_i64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[tokio::test]
async fn health_matches_schema() {
    let (status, body) = call(&pattern_app(), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let schema: Value = serde_json::from_str(&fs::read_to_string(fixture("service/health_schema.json")).unwrap()).unwrap();
    let schema = schema.as_object().unwrap();
    let body = body.as_object().unwrap();
    assert_eq!(body.len(), schema.len());
    for (key, ty) in schema {
        assert_eq!(json_type(&body[key]), ty.as_str().unwrap(), "field {key}");
    }
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn plugins_lists_registry() {
    let (status, body) = call(&pattern_app(), "GET", "/api/plugins", None).await;
    assert_eq!(status, StatusCode::OK);
    let registry: RegistryResponse = serde_json::from_value(body).unwrap();
    let ids: Vec<&str> = registry.plugins.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, ["cbt-regex", "cbt-llm", "moralization-llm"]);
    assert_eq!(registry.taxonomy_version, "1.0.0");
}

#[tokio::test]
async fn analyze_runs_pattern_plugin() {
    let req = AnalysisRequest::new("post-7", "Everyone knows this is a total disaster.", &["cbt-regex"]);
    let (status, body) = call(&pattern_app(), "POST", "/api/analyze", Some(serde_json::to_string(&req).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    let result: AnalysisResult = serde_json::from_value(body).unwrap();
    assert_eq!(result.content_id, "post-7");
    let types: Vec<&str> = result.all_findings().map(|f| f.trigger_type_id.as_str()).collect();
    assert!(types.contains(&"bandwagon-reductio-ad-hitlerum"));
    assert!(!result.plugins[0].from_cache);
}

#[tokio::test]
async fn analyze_error_statuses() {
    let app = pattern_app();
    let (s, body) = call(&app, "POST", "/api/analyze", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());

    let empty = json!({"content_id": "x", "text": "", "plugin_ids": ["cbt-regex"]});
    let (s, _) = call(&app, "POST", "/api/analyze", Some(empty.to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let bad_sensitivity = json!({"content_id": "x", "text": "hi", "sensitivity": 3.0, "plugin_ids": ["cbt-regex"]});
    let (s, _) = call(&app, "POST", "/api/analyze", Some(bad_sensitivity.to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let unknown = json!({"content_id": "x", "text": "hi", "plugin_ids": ["nope"]});
    let (s, _) = call(&app, "POST", "/api/analyze", Some(unknown.to_string())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // the model plugin cannot run on a pattern-only server
    let llm = json!({"content_id": "x", "text": "hi there", "plugin_ids": ["cbt-llm"]});
    let (s, body) = call(&app, "POST", "/api/analyze", Some(llm.to_string())).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert_eq!(body["result"]["plugins"][0]["plugin_id"], "cbt-llm");
}

#[tokio::test]
async fn request_backend_field_is_ignored() {
    // A client cannot point the server at another endpoint.
    let recorder = Arc::new(RecordingTransport::new(Arc::new(NullTransport)));
    let app = router(server_state(recorder.clone(), BackendConfig::pattern()), None).unwrap();
    let req = json!({
        "content_id": "x", "text": "Everyone knows it.", "plugin_ids": ["cbt-regex", "cbt-llm"],
        "backend": {"tier": "local-api", "endpoint": "http://evil.invalid", "model_id": "m"}
    });
    let (s, body) = call(&app, "POST", "/api/analyze", Some(req.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body["plugins"][1]["diagnostics"]["error"].is_string());
    assert_eq!(recorder.connection_count(), 0);
}

#[tokio::test]
async fn rewrite_endpoint() {
    let app = router(server_state(echo_model(0), stub_backend()), None).unwrap();
    let (s, body) = call(&app, "POST", "/api/rewrite", Some(json!({"text": "calm words"}).to_string())).await;
    assert_eq!(s, StatusCode::OK);
    // nothing flagged, nothing to change
    assert_eq!(body["rewritten"], "calm words");

    let req = AnalysisRequest::new("r", "Disgraceful scheme again.", &["cbt-llm"]);
    let (_, analysis) = call(&app, "POST", "/api/analyze", Some(serde_json::to_string(&req).unwrap())).await;
    let findings = analysis["plugins"][0]["findings"].clone();
    assert_eq!(findings.as_array().unwrap().len(), 1);
    let body = json!({"text": "Disgraceful scheme again.", "findings": findings});
    let (s, out) = call(&app, "POST", "/api/rewrite", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::OK, "{out}");
    assert_eq!(out["rewritten"], "DISGRACEFUL SCHEME AGAIN.");

    let (s, _) = call(&app, "POST", "/api/rewrite", Some(json!({"findings": []}).to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/api/rewrite", Some(json!({"text": "x", "k": 0}).to_string())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn rewrite_backend_failure_is_bad_gateway() {
    let failing = Arc::new(FnTransport(|_: &HttpRequest| -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse { status: 503, body: "down".into() })
    }));
    let app = router(server_state(failing, stub_backend()), None).unwrap();
    let req = AnalysisRequest::new("r", "Disgraceful scheme again.", &["cbt-regex"]);
    let (_, analysis) = call(&app, "POST", "/api/analyze", Some(serde_json::to_string(&req).unwrap())).await;
    let findings = analysis["plugins"][0]["findings"].clone();
    assert!(!findings.as_array().unwrap().is_empty());
    let body = json!({"text": "Disgraceful scheme again.", "findings": findings});
    let (s, out) = call(&app, "POST", "/api/rewrite", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert!(out["error"].as_str().unwrap().contains("503"));
}

#[tokio::test]
async fn cors_allows_configured_origin_only() {
    let state = server_state(Arc::new(NullTransport), BackendConfig::pattern());
    let app = router(state, Some("chrome-extension://abc")).unwrap();
    let preflight = |origin: &'static str| {
        Request::builder()
            .method("OPTIONS")
            .uri("/api/analyze")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    let ok = app.clone().oneshot(preflight("chrome-extension://abc")).await.unwrap();
    assert_eq!(
        ok.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "chrome-extension://abc"
    );
    let other = app.oneshot(preflight("https://elsewhere.example")).await.unwrap();
    // a foreign origin never gets itself echoed back
    assert_eq!(
        other.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "chrome-extension://abc"
    );
    let closed = pattern_app().oneshot(preflight("chrome-extension://abc")).await.unwrap();
    assert!(closed.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

#[test]
fn ui_message_fixtures_round_trip() {
    let raw = fs::read_to_string(fixture("service/ui_messages.jsonl")).unwrap();
    let mut kinds = Vec::new();
    for line in raw.lines() {
        let msg = decode_message(line).unwrap().expect("known kind");
        let back: Value = serde_json::to_value(&msg).unwrap();
        let again: UiMessage = serde_json::from_value(back).unwrap();
        assert_eq!(again, msg);
        kinds.push(msg.body.kind());
    }
    assert!(kinds.contains(&"settings-changed"));
    for kind in &kinds {
        if let Some(resp) = response_kind(kind) {
            assert!(triggerscope::service::messages::MESSAGE_KINDS.contains(&resp));
        }
    }
}

#[test]
fn analysis_result_travels_inside_ui_message() {
    let result: AnalysisResult = serde_json::from_value(json!({"content_id": "b", "plugins": []})).unwrap();
    let msg = UiMessage::new("c-9", UiPayload::AnalysisResult { block_id: "b".into(), result });
    let decoded = decode_message(&serde_json::to_string(&msg).unwrap()).unwrap().unwrap();
    assert_eq!(decoded, msg);
}

#[test]
fn served_over_tcp() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(triggerscope::service::serve(listener, pattern_app(), async {
        let _ = rx.await;
    }));

    let agent = ureq::Agent::config_builder().http_status_as_error(false).build().new_agent();
    let mut resp = agent.get(&format!("http://{addr}/health")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let body: Value = serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap();
    assert_eq!(body["status"], "ok");

    tx.send(()).unwrap();
    rt.block_on(server).unwrap().unwrap();
}
