//! Plugins hosted by a server speaking the `/api` contract.

use serde::Deserialize;

use super::{
    AnalysisRequest, AnalysisResult, DetectContext, Plugin, PluginDescriptor, PluginError,
    PluginKind, PluginOutput,
};
use crate::gateway::{BackendConfig, Gateway, GatewayError, HttpRequest, Tier};
use crate::service::RegistryResponse;

/// Proxy for a plugin that runs on a remote server.
///
/// Reaching the server is network I/O, so the descriptor's required tier is
/// raised to at least `local-api` regardless of what the server advertises.
#[derive(Debug, Clone)]
pub struct RemotePlugin {
    descriptor: PluginDescriptor,
    remote_id: String,
    base_url: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

impl RemotePlugin {
    pub fn new(server_descriptor: PluginDescriptor, base_url: impl Into<String>) -> Self {
        let remote_id = server_descriptor.id.clone();
        let descriptor = PluginDescriptor {
            kind: PluginKind::Remote,
            required_tier: server_descriptor.required_tier.max(Tier::LocalApi),
            ..server_descriptor
        };
        Self {
            descriptor,
            remote_id,
            base_url: base_url.into().trim_end_matches('/').to_string(),
        }
    }

    /// Registers under a different local id (e.g. to avoid clashing with an
    /// in-process plugin of the same name).
    pub fn with_local_id(mut self, id: impl Into<String>) -> Self {
        self.descriptor.id = id.into();
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Id of the plugin on the remote server.
    pub fn remote_id(&self) -> &str {
        &self.remote_id
    }
}

impl Plugin for RemotePlugin {
    fn descriptor(&self) -> &PluginDescriptor {
        &self.descriptor
    }

    fn detect(&self, ctx: &DetectContext<'_>) -> Result<PluginOutput, PluginError> {
        let body = AnalysisRequest {
            content_id: "remote".into(),
            text: ctx.text.to_string(),
            locale: ctx.locale,
            sensitivity: 0.0,
            plugin_ids: vec![self.remote_id.clone()],
            backend: None,
        };
        let body = serde_json::to_string(&body).map_err(|e| PluginError::Failed(e.to_string()))?;
        let request = HttpRequest::post_json(
            format!("{}/api/analyze", self.base_url),
            body,
            ctx.backend.timeout(),
        );
        let response = ctx.gateway.send(ctx.backend, &request)?;
        if !(200..300).contains(&response.status) {
            let message = serde_json::from_str::<ErrorBody>(&response.body)
                .map(|b| b.error)
                .unwrap_or_else(|_| response.body.chars().take(512).collect());
            return Err(GatewayError::Status {
                status: response.status,
                body: message,
            }
            .into());
        }
        let result: AnalysisResult = serde_json::from_str(&response.body)
            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        let remote = result
            .plugins
            .into_iter()
            .find(|p| p.plugin_id == self.remote_id)
            .ok_or_else(|| {
                PluginError::Failed(format!("server returned no result for `{}`", self.remote_id))
            })?;
        if let Some(error) = remote.diagnostics.error {
            return Err(PluginError::Failed(error));
        }
        Ok(PluginOutput {
            findings: remote.findings,
            moralization: remote.moralization,
            diagnostics: remote.diagnostics,
        })
    }

    fn config_digest(&self) -> String {
        format!("{}|{}|{}", self.base_url, self.remote_id, self.descriptor.version)
    }
}

/// Fetches `GET /api/plugins` from `base_url` and wraps every advertised
/// plugin as a [`RemotePlugin`].
pub fn discover_remote_plugins(
    gateway: &Gateway,
    backend: &BackendConfig,
    base_url: &str,
) -> Result<(RegistryResponse, Vec<RemotePlugin>), PluginError> {
    let base = base_url.trim_end_matches('/');
    let request = HttpRequest::get(format!("{base}/api/plugins"), backend.timeout());
    let response = gateway.send(backend, &request)?;
    if !(200..300).contains(&response.status) {
        return Err(GatewayError::Status {
            status: response.status,
            body: response.body.chars().take(512).collect(),
        }
        .into());
    }
    let registry: RegistryResponse = serde_json::from_str(&response.body)
        .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    let plugins = registry
        .plugins
        .iter()
        .cloned()
        .map(|d| RemotePlugin::new(d, base))
        .collect();
    Ok((registry, plugins))
}
