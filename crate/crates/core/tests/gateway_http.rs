//! The gateway and remote plugins against real sockets.

mod common;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::HeaderMap;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use triggerscope::gateway::{completion_response_body, ChatPrompt, GatewayError, HttpTransport, NullTransport};
use triggerscope::plugin::{discover_remote_plugins, AnalysisRequest, PluginRegistry};
use triggerscope::service::router;
use triggerscope::{Analyzer, BackendConfig, Gateway, Taxonomy, Tier};

use common::server_state;

struct Server {
    addr: SocketAddr,
    _runtime: tokio::runtime::Runtime,
}

fn spawn(app: Router) -> Server {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    runtime.spawn(async move { axum::serve(listener, app).await });
    Server { addr, _runtime: runtime }
}

type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

/// A chat-completion endpoint that records the auth header and body it sees.
fn completion_stub(seen: Seen, delay: Duration) -> Router {
    Router::new().route(
        "/v1/chat/completions",
        post(move |headers: HeaderMap, Json(body): Json<Value>| {
            let seen = seen.clone();
            async move {
                tokio::time::sleep(delay).await;
                let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                let user = body["messages"][1]["content"].as_str().unwrap_or_default().to_string();
                seen.lock().unwrap().push((auth, body));
                let reply: Value = serde_json::from_str(&completion_response_body("served-model", &format!("echo: {user}"))).unwrap();
                Json(reply)
            }
        }),
    )
}

fn prompt() -> ChatPrompt {
    ChatPrompt {
        system: "sys".into(),
        user: "hello".into(),
    }
}

#[test]
fn local_api_round_trip() {
    let seen = Seen::default();
    let server = spawn(completion_stub(seen.clone(), Duration::ZERO));
    let gateway = Gateway::new(Arc::new(HttpTransport::new()));
    let backend = BackendConfig::local_api(format!("http://{}/v1", server.addr), "tiny-model");
    let out = gateway.complete(&prompt(), &backend).unwrap();
    assert_eq!(out.text, "echo: hello");
    assert_eq!(out.model_id, "served-model");

    let seen = seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert!(auth.is_none());
    assert_eq!(body["model"], "tiny-model");
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "sys"}));
}

#[test]
fn cloud_api_sends_bearer_from_env() {
    let seen = Seen::default();
    let server = spawn(completion_stub(seen.clone(), Duration::ZERO));
    let gateway = Gateway::new(Arc::new(HttpTransport::new()));
    // SAFETY: the variable name is unique to this test.
    unsafe { std::env::set_var("GATEWAY_HTTP_TEST_KEY", "sk-test") };
    let backend = BackendConfig::cloud_api(format!("http://{}/v1", server.addr), "m", "GATEWAY_HTTP_TEST_KEY");
    gateway.complete(&prompt(), &backend).unwrap();
    assert_eq!(seen.lock().unwrap()[0].0.as_deref(), Some("Bearer sk-test"));

    let missing = BackendConfig::cloud_api(format!("http://{}/v1", server.addr), "m", "GATEWAY_HTTP_TEST_UNSET");
    assert!(matches!(gateway.complete(&prompt(), &missing), Err(GatewayError::Config(_))));
}

#[test]
fn slow_backend_times_out() {
    let server = spawn(completion_stub(Seen::default(), Duration::from_millis(800)));
    let gateway = Gateway::new(Arc::new(HttpTransport::new()));
    let backend = BackendConfig::local_api(format!("http://{}/v1", server.addr), "m").with_timeout_ms(100);
    assert_eq!(gateway.complete(&prompt(), &backend), Err(GatewayError::Timeout));
}

#[test]
fn non_success_status_is_reported() {
    let server = spawn(Router::new());
    let gateway = Gateway::new(Arc::new(HttpTransport::new()));
    let backend = BackendConfig::local_api(format!("http://{}/v1", server.addr), "m");
    assert!(matches!(
        gateway.complete(&prompt(), &backend),
        Err(GatewayError::Status { status: 404, .. })
    ));
}

#[test]
fn refused_connection_is_transport_error() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let gateway = Gateway::new(Arc::new(HttpTransport::new()));
    let backend = BackendConfig::local_api(format!("http://{addr}/v1"), "m");
    assert!(matches!(gateway.complete(&prompt(), &backend), Err(GatewayError::Transport(_))));
}

#[test]
fn remote_plugins_proxy_to_a_live_service() {
    let remote = spawn(router(server_state(Arc::new(NullTransport), BackendConfig::pattern()), None).unwrap());
    let base = format!("http://{}", remote.addr);
    let gateway = Gateway::new(Arc::new(HttpTransport::new()));
    let backend = BackendConfig::local_api(&base, "unused");

    let (registry, plugins) = discover_remote_plugins(&gateway, &backend, &base).unwrap();
    assert_eq!(registry.plugins.len(), 3);

    let mut local = PluginRegistry::new();
    for p in plugins {
        let id = format!("remote-{}", p.remote_id());
        local.register(Arc::new(p.with_local_id(id))).unwrap();
    }
    let descriptor = local.get("remote-cbt-regex").unwrap().descriptor();
    assert_eq!(descriptor.required_tier, Tier::LocalApi);

    let analyzer = Analyzer::new(Arc::new(Taxonomy::shipped()), Arc::new(local), gateway).with_backend(backend);
    let text = "Everyone knows this is a disaster.";
    let result = analyzer.analyze(&AnalysisRequest::new("p", text, &["remote-cbt-regex"])).unwrap();
    let plugin = result.plugin("remote-cbt-regex").unwrap();
    assert!(!plugin.findings.is_empty());
    for f in &plugin.findings {
        let excerpt: String = text.chars().skip(f.span.start).take(f.span.end - f.span.start).collect();
        assert_eq!(excerpt, f.span.excerpt);
        assert_eq!(f.plugin_id, "remote-cbt-regex");
    }

    // pattern tier refuses to reach the remote server at all
    let denied = analyzer
        .analyze_with_backend(&AnalysisRequest::new("p", text, &["remote-cbt-regex"]), Some(&BackendConfig::pattern()))
        .unwrap_err();
    assert!(denied.to_string().contains("failed"));
}
