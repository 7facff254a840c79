//! Stateless HTTP backend.
//!
//! Routes:
//! - `GET /health`
//! - `GET /api/plugins` lists the registered plugins
//! - `POST /api/analyze` runs an [`AnalysisRequest`]
//! - `POST /api/rewrite` rewrites text, or returns `k` alternatives
//!
//! Nothing is written to disk and no result cache is kept server-side. The
//! server always uses its own configured backend; a `backend` field in an
//! incoming request is ignored.

pub mod messages;

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::CorsLayer;

use crate::findings::Finding;
use crate::gateway::{BackendConfig, Gateway};
use crate::llm::{CbtLlmPlugin, MoralizationLlmPlugin};
use crate::mitigation::{self, AlternativesResult, MitigationError, RewriteResult};
use crate::patterns::{PatternPlugin, PatternRule, RuleError};
use crate::plugin::{AnalysisRequest, AnalysisResult, AnalyzeError, Analyzer, PluginDescriptor, PluginRegistry};
use crate::taxonomy::Taxonomy;

pub use messages::{AutoAnalyze, ContentBlock, SourceKind, UiMessage, UiPayload, Settings};

pub const SERVER_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryResponse {
    pub server_version: String,
    pub taxonomy_version: String,
    pub plugins: Vec<PluginDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub server_version: String,
    pub taxonomy_version: String,
    pub uptime_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<AnalysisResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub text: String,
    #[serde(default)]
    pub findings: Vec<Finding>,
    /// When set, return this many alternatives instead of one rewrite.
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewriteResponse {
    Rewrite(RewriteResult),
    Alternatives(AlternativesResult),
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("invalid CORS origin `{0}`")]
    CorsOrigin(String),
}

/// The default server registry: pattern matcher plus both model plugins.
pub fn default_registry(taxonomy: &Taxonomy, rules: Option<&[PatternRule]>) -> Result<PluginRegistry, RuleError> {
    let pattern = match rules {
        Some(rules) => PatternPlugin::new(crate::patterns::compile_rules(taxonomy, rules)?),
        None => PatternPlugin::shipped(taxonomy)?,
    };
    let mut registry = PluginRegistry::new();
    let duplicate = |e| unreachable!("fixed plugin ids are distinct: {e}");
    registry.register(Arc::new(pattern)).unwrap_or_else(duplicate);
    registry
        .register(Arc::new(CbtLlmPlugin::new()))
        .unwrap_or_else(duplicate);
    registry
        .register(Arc::new(MoralizationLlmPlugin::new()))
        .unwrap_or_else(duplicate);
    Ok(registry)
}

#[derive(Clone)]
pub struct AppState {
    analyzer: Analyzer,
    started: Instant,
}

impl AppState {
    /// Any cache on `analyzer` is dropped: the server keeps no results.
    pub fn new(analyzer: Analyzer) -> Self {
        Self {
            analyzer: analyzer.without_cache(),
            started: Instant::now(),
        }
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn registry_response(&self) -> RegistryResponse {
        RegistryResponse {
            server_version: SERVER_VERSION.to_string(),
            taxonomy_version: self.analyzer.taxonomy().version().to_string(),
            plugins: self.analyzer.registry().list_plugins(),
        }
    }

    fn gateway(&self) -> &Gateway {
        self.analyzer.gateway()
    }

    fn backend(&self) -> &BackendConfig {
        self.analyzer.default_backend()
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.into(),
            result: None,
        }),
    )
        .into_response()
}

async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".to_string(),
        server_version: SERVER_VERSION.to_string(),
        taxonomy_version: state.analyzer.taxonomy().version().to_string(),
        uptime_ms: state.started.elapsed().as_millis() as u64,
    })
}

async fn plugins(State(state): State<AppState>) -> Json<RegistryResponse> {
    Json(state.registry_response())
}

async fn analyze(State(state): State<AppState>, body: Bytes) -> Response {
    let request: AnalysisRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")),
    };
    let analyzer = state.analyzer.clone();
    let outcome = tokio::task::spawn_blocking(move || analyzer.analyze_with_backend(&request, None)).await;
    match outcome {
        Ok(Ok(result)) => (StatusCode::OK, Json(result)).into_response(),
        Ok(Err(e @ AnalyzeError::InvalidRequest(_))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e @ AnalyzeError::UnknownPlugin(_))) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Ok(Err(AnalyzeError::AllPluginsFailed(result))) => (
            StatusCode::BAD_GATEWAY,
            Json(ErrorBody {
                error: "all plugins failed".to_string(),
                result: Some(result),
            }),
        )
            .into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn rewrite(State(state): State<AppState>, body: Bytes) -> Response {
    let request: RewriteRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")),
    };
    if request.text.is_empty() {
        return error(StatusCode::BAD_REQUEST, "text is empty");
    }
    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || match request.k {
        None => mitigation::rewrite(worker.gateway(), &request.text, &request.findings, worker.backend())
            .map(RewriteResponse::Rewrite),
        Some(k) => mitigation::alternatives(worker.gateway(), &request.text, &request.findings, k, worker.backend())
            .map(RewriteResponse::Alternatives),
    })
    .await;
    match outcome {
        Ok(Ok(result)) => (StatusCode::OK, Json(result)).into_response(),
        Ok(Err(e @ (MitigationError::InvalidK | MitigationError::InvalidFinding(_)))) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Ok(Err(e)) => error(StatusCode::BAD_GATEWAY, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Builds the router. `cors_origin` allow-lists a single browser origin.
pub fn router(state: AppState, cors_origin: Option<&str>) -> Result<Router, ServiceError> {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/api/plugins", get(plugins))
        .route("/api/analyze", post(analyze))
        .route("/api/rewrite", post(rewrite))
        .with_state(state);
    if let Some(origin) = cors_origin {
        let origin = HeaderValue::from_str(origin).map_err(|_| ServiceError::CorsOrigin(origin.to_string()))?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, app: Router, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
